#pragma once

// Command-line front end: solve | series | value | validate.
//
// Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 invariant
// violation during validate. Diagnostics go to the error stream as one line;
// data goes to the output stream or --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mertontc/error.hpp"
#include "mertontc/expansion.hpp"
#include "mertontc/freeboundary.hpp"
#include "mertontc/hjbcheck.hpp"
#include "mertontc/model.hpp"

namespace mertontc::cli {

enum class Command { Solve, Series, Value, Validate };
enum class Format { Json, Csv };

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitInvariant = 4;

struct RunConfig {
    Command command = Command::Solve;
    MarketParams params;
    int order = kDefaultSeriesOrder;
    std::optional<Endowment> endowment;
    std::optional<std::vector<double>> lambda_grid;
    std::string out;  ///< empty: standard output
    Format format = Format::Json;
};

/// Raised for any invalid or missing input; maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised by parse_cli for --help; carries the rendered help text.
struct HelpRequested {
    std::string text;
};

/// Values read from a "key = value" file; keys outside the fixed set are rejected.
inline std::map<std::string, double> read_config_file(const std::string& path) {
    static const std::vector<std::string> keys{"mu", "sigma", "delta", "p", "lambda",
                                               "order", "eta_b", "eta_s", "s0"};
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::map<std::string, double> kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        const std::string where = path + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw UsageError(where + ": unknown key '" + key + "'");
        }
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(val, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != val.size()) throw UsageError(where + ": '" + val + "' is not a number");
        kv[key] = v;
    }
    return kv;
}

inline std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> g;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size()) throw UsageError("bad --lambda-grid entry '" + item + "'");
        g.push_back(v);
    }
    if (g.empty()) throw UsageError("--lambda-grid is empty");
    return g;
}

/// Parses argv into a RunConfig. Flags override config-file values.
/// Throws HelpRequested for --help and UsageError for anything invalid.
inline RunConfig parse_cli(int argc, const char* const* argv) {
    CLI::App app{"Free-boundary and small-cost series solver for optimal investment with proportional costs"};
    app.require_subcommand(1);

    std::map<std::string, double> flag;
    std::string config_path, out_path, format = "json", grid;

    auto add_common = [&](CLI::App* sub) {
        for (const char* name : {"mu", "sigma", "delta", "p", "lambda", "order", "s0"}) {
            sub->add_option_function<double>(std::string("--") + name,
                                              [&flag, name](const double& v) { flag[name] = v; });
        }
        sub->add_option_function<double>("--eta-b", [&flag](const double& v) { flag["eta_b"] = v; });
        sub->add_option_function<double>("--eta-s", [&flag](const double& v) { flag["eta_s"] = v; });
        sub->add_option("--lambda-grid", grid, "comma-separated costs");
        sub->add_option("--config", config_path, "file of 'key = value' lines");
        sub->add_option("--out", out_path, "write output here instead of stdout");
        sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    };
    auto* solve = app.add_subcommand("solve", "solve the free boundary at one cost");
    auto* series = app.add_subcommand("series", "small-cost series coefficients");
    auto* value = app.add_subcommand("value", "value function for an endowment");
    auto* validate = app.add_subcommand("validate", "numeric vs series cross-validation");
    for (auto* s : {solve, series, value, validate}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = &app;
        for (const auto* s : app.get_subcommands()) target = s;
        throw HelpRequested{target->help()};
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    RunConfig cfg;
    if (solve->parsed()) cfg.command = Command::Solve;
    if (series->parsed()) cfg.command = Command::Series;
    if (value->parsed()) cfg.command = Command::Value;
    if (validate->parsed()) cfg.command = Command::Validate;

    std::map<std::string, double> kv;
    if (!config_path.empty()) kv = read_config_file(config_path);
    for (const auto& [k, v] : flag) kv[k] = v;

    auto need = [&](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw UsageError(std::string("missing required value '") + key + "'");
        return it->second;
    };
    cfg.params.mu = need("mu");
    cfg.params.sigma = need("sigma");
    cfg.params.delta = need("delta");
    cfg.params.p = need("p");
    const bool cost_required = cfg.command == Command::Solve || cfg.command == Command::Value;
    cfg.params.lambda = cost_required ? need("lambda") : (kv.count("lambda") ? kv["lambda"] : 0.0);

    if (kv.count("order")) {
        const double o = kv["order"];
        if (o != std::floor(o) || o < 1 || o > 16) throw UsageError("order must be an integer in [1, 16]");
        cfg.order = static_cast<int>(o);
    }

    const bool any_endow = kv.count("eta_b") || kv.count("eta_s") || kv.count("s0");
    if (cfg.command == Command::Value || any_endow) {
        if (!kv.count("eta_b") || !kv.count("eta_s")) {
            throw UsageError("endowment needs both --eta-b and --eta-s");
        }
        Endowment e;
        e.eta_b = kv["eta_b"];
        e.eta_s = kv["eta_s"];
        e.s0 = kv.count("s0") ? kv["s0"] : 1.0;
        cfg.endowment = e;
    }

    if (!grid.empty()) cfg.lambda_grid = parse_grid(grid);
    cfg.out = out_path;
    cfg.format = format == "csv" ? Format::Csv : Format::Json;
    return cfg;
}

namespace detail {

inline std::string g17(double v) { return format_g17(v); }

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline nlohmann::ordered_json series_json(const UnivariateSeries& s) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (double c : s.coeffs()) a.push_back(c);
    return a;
}

inline int error_exit(const Error& e) {
    switch (e.code()) {
        case ErrorCode::BadRange:
        case ErrorCode::IllPosed:
        case ErrorCode::UnitMerton:
        case ErrorCode::Insolvent:
        case ErrorCode::InvalidInput:
        case ErrorCode::CaseBoundary:
            return kExitInvalid;
        default:
            return kExitSolver;
    }
}

inline std::string render_solve(const RunConfig& cfg) {
    const Model model(cfg.params);
    const auto sol = solve_free_boundary(model);
    const auto w = wedge_slopes(sol);
    if (cfg.format == Format::Csv) {
        return "x_lo,x_hi,pi_lo,pi_hi,integral_residual\n" + g17(sol.x_lo) + "," + g17(sol.x_hi) + "," +
               g17(w.pi_lo) + "," + g17(w.pi_hi) + "," + g17(sol.integral_residual) + "\n";
    }
    nlohmann::ordered_json j;
    j["x_lo"] = sol.x_lo;
    j["x_hi"] = sol.x_hi;
    j["pi_lo"] = w.pi_lo;
    j["pi_hi"] = w.pi_hi;
    j["integral_residual"] = sol.integral_residual;
    return dump(j);
}

inline std::string render_series(const RunConfig& cfg) {
    const Model model(cfg.params);
    const auto b = build_expansion(model, cfg.order);
    if (cfg.format == Format::Csv) {
        std::string s = "i,d_i,x_hi_i,s_lo_i,s_hi_i\n";
        for (int i = 0; i <= cfg.order; ++i) {
            s += std::to_string(i) + "," + g17(b.alpha_series[i]) + "," + g17(b.x_hi_series[i]) + "," +
                 g17(b.wedge_lo[i]) + "," + g17(b.wedge_hi[i]) + "\n";
        }
        return s;
    }
    nlohmann::ordered_json j;
    j["order"] = cfg.order;
    j["x_n"] = b.merton.x_n;
    j["y_n"] = b.merton.y_n;
    j["pi"] = b.merton.pi;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int i = 0; i <= cfg.order; ++i) {
        rows.push_back({{"i", i},
                        {"d_i", b.alpha_series[i]},
                        {"x_hi_i", b.x_hi_series[i]},
                        {"s_lo_i", b.wedge_lo[i]},
                        {"s_hi_i", b.wedge_hi[i]}});
    }
    j["coefficients"] = rows;
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (int i = 0; i <= b.g_series.order1(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (int k = 0; k <= b.g_series.order2(); ++k) row.push_back(b.g_series.at(i, k));
        a.push_back(row);
    }
    j["a"] = a;
    j["b"] = series_json(b.beta_series);
    j["c"] = series_json(b.c_series);
    j["residual_report"] = b.residual_report();
    if (cfg.endowment) {
        const auto v = compute_value_series(b, *cfg.endowment);
        j["value_case"] = to_string(v.region);
        j["zeta"] = series_json(v.zeta);
    }
    return dump(j);
}

inline std::string render_value(const RunConfig& cfg) {
    const Model model(cfg.params);
    const auto sol = solve_free_boundary(model);
    const auto v = value_u(sol, *cfg.endowment);
    if (cfg.format == Format::Csv) {
        return "u,x_hat,case\n" + g17(v.u) + "," + g17(v.xhat.x) + "," + to_string(v.xhat.region) + "\n";
    }
    nlohmann::ordered_json j;
    j["u"] = v.u;
    j["x_hat"] = v.xhat.x;
    j["case"] = to_string(v.xhat.region);
    return dump(j);
}

}  // namespace detail

/// Executes a parsed config; returns the process exit code.
inline int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    std::string text;
    int code = kExitOk;
    try {
        switch (cfg.command) {
            case Command::Solve: text = detail::render_solve(cfg); break;
            case Command::Series: text = detail::render_series(cfg); break;
            case Command::Value: text = detail::render_value(cfg); break;
            case Command::Validate: {
                validate_params(cfg.params);
                const auto grid = cfg.lambda_grid.value_or(default_lambda_grid());
                for (double l : grid) {
                    if (!(l > 0.0 && l < kDefaultLambdaCeiling)) {
                        throw Error(ErrorCode::BadRange, "lambda grid entries must lie in (0, ceiling)");
                    }
                }
                const auto rep = cross_validate(cfg.params, grid, cfg.order, cfg.endowment);
                text = cfg.format == Format::Csv ? to_csv(rep) : detail::dump(to_json(rep));
                for (const auto& r : rep.rows) {
                    if (r.status.rfind("invariant:", 0) == 0) {
                        code = kExitInvariant;
                        err << "lambda " << r.lambda << ": " << r.status << "\n";
                    } else if (r.status != "ok" && code == kExitOk) {
                        code = kExitSolver;
                        err << "lambda " << r.lambda << ": " << r.status << "\n";
                    }
                }
                break;
            }
        }
    } catch (const Error& e) {
        err << e.what() << "\n";
        return detail::error_exit(e);
    }

    if (cfg.out.empty()) {
        out << text;
    } else {
        std::ofstream f(cfg.out, std::ios::binary);
        if (!f || !(f << text)) {
            err << "cannot write " << cfg.out << "\n";
            return kExitInvalid;
        }
    }
    return code;
}

/// Full CLI entry point.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    try {
        cfg = parse_cli(argc, argv);
    } catch (const HelpRequested& h) {
        out << h.text;
        return kExitOk;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    return run(cfg, out, err);
}

}  // namespace mertontc::cli
