#pragma once

// Independent checks on a solved strip, and the numeric-vs-series harness.
//
// The HJB bracket is evaluated at the explicit minimizers (theta^, Sigma^).
// It vanishes identically once g' = L(x, g) is substituted, so the check feeds
// it the slope of the dense interpolant instead: the residual then measures
// how well the integrated curve satisfies the HJB equation itself.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mertontc/error.hpp"
#include "mertontc/expansion.hpp"
#include "mertontc/freeboundary.hpp"
#include "mertontc/model.hpp"

namespace mertontc {

/// h = q g (g' + 1) - (q + 1) x g'.
inline double h_function(const MarketParams& m, double x, double g, double gp) {
    const double q = m.p / (1.0 - m.p);
    return q * g * (gp + 1.0) - (q + 1.0) * x * gp;
}

/// The HJB bracket at (Sigma^, theta^) for given (x, g, g'). The Sigma^2 x / (2 g')
/// term is used in its cancelled form sigma^2 (q g - x)^2 g' x / (2 h^2).
inline double hjb_bracket(const MarketParams& m, double x, double g, double gp) {
    const double q = m.p / (1.0 - m.p);
    const double h = h_function(m, x, g, gp);
    if (h == 0.0 || !std::isfinite(h)) {
        std::ostringstream os;
        os << "h vanishes at x = " << x;
        throw Error(ErrorCode::HZero, os.str());
    }
    const double sig = m.sigma;
    const double theta = -sig * (1.0 - m.p) * x * (q * gp - 1.0) / h;
    const double Sigma = -sig * (q * g - x) * gp / h;
    const double ratio = (q * g - x) / h;
    const double diffusion = 0.5 * sig * sig * ratio * ratio * gp * x;
    const double alpha_q = theta * sig - m.mu - Sigma * (0.5 * Sigma + sig - theta * (1.0 + q));
    const double beta = (1.0 + q) * (m.delta - 0.5 * q * theta * theta);
    const double gamma = static_cast<double>(sign_of(m.p));
    return diffusion - alpha_q * x - beta * g + gamma;
}

inline double hjb_residual(const FreeBoundarySolution& sol, double x) {
    const double g = eval_leg(sol.leg, x).g;
    return hjb_bracket(sol.params(), x, g, leg_interpolant_slope(sol.leg, x));
}

/// Max |HJB residual| over `points` equally spaced interior points.
inline double hjb_max_residual(const FreeBoundarySolution& sol, int points = 50) {
    if (sol.x_hi == sol.x_lo) return std::abs(hjb_residual(sol, sol.x_lo));
    double worst = 0.0;
    for (int i = 1; i <= points; ++i) {
        const double x = sol.x_lo + (sol.x_hi - sol.x_lo) * i / (points + 1);
        worst = std::max(worst, std::abs(hjb_residual(sol, x)));
    }
    return worst;
}

struct HProfile {
    double min_abs = 0.0;
    int sign = 0;
};

/// h on a 200-point grid of [x_lo, x_hi] with g' = L(x, g).
inline HProfile h_profile(const FreeBoundarySolution& sol, int points = 200) {
    HProfile out{std::numeric_limits<double>::infinity(), 0};
    for (int i = 0; i < points; ++i) {
        const double x = points == 1 ? sol.x_lo : sol.x_lo + (sol.x_hi - sol.x_lo) * i / (points - 1);
        const auto pt = eval_leg(sol.leg, std::min(x, sol.x_hi));
        const double h = h_function(sol.params(), x, pt.g, pt.gprime);
        const int s = sign_of(h);
        if (s == 0) throw Error(ErrorCode::HZero, "h vanishes on the strip");
        if (out.sign != 0 && s != out.sign) {
            std::ostringstream os;
            os << "h changes sign near x = " << x;
            throw Error(ErrorCode::SignChange, os.str());
        }
        out.sign = s;
        out.min_abs = std::min(out.min_abs, std::abs(h));
    }
    return out;
}

/// The per-instance invariants of a solved strip.
struct InstanceCheck {
    double integral_residual = 0.0;
    double min_interior_gprime = 0.0;
    double f_err_lo = 0.0;
    double f_err_hi = 0.0;
    WedgeSlopes slopes;
    HProfile h;
    double hjb_max = 0.0;
    double u = 0.0;
    double zeta0 = 0.0;
    double homogeneity_err = 0.0;  ///< max relative error over k in {0.5, 2}

    /// Names of the violated invariants; empty when all hold.
    std::vector<std::string> violations(const Model& model) const {
        std::vector<std::string> v;
        const auto& mq = model.merton();
        if (!(std::abs(integral_residual) < 1e-10)) v.emplace_back("integral_residual");
        if (model.lambda() > 0.0 && !(min_interior_gprime > 0.0)) v.emplace_back("gprime_positive");
        if (!(f_err_lo <= 1e-10 && f_err_hi <= 1e-10)) v.emplace_back("f_endpoints");
        if (model.lambda() > 0.0 && !(slopes.pi_lo < mq.pi && mq.pi < slopes.pi_hi)) v.emplace_back("wedge_order");
        if (!(h.min_abs > 0.1 * std::abs(mq.q * mq.y_n))) v.emplace_back("h_margin");
        if (!(hjb_max < 1e-8 * model.scale())) v.emplace_back("hjb_residual");
        if (!(u <= zeta0 + 1e-12 * std::abs(zeta0))) v.emplace_back("value_dominance");
        if (!(homogeneity_err <= 1e-12)) v.emplace_back("homogeneity");
        return v;
    }
};

/// Frictionless value (1/p)|y_N|^{1-p} W^p.
inline double frictionless_value(const Model& model, const Endowment& e) {
    const double p = model.params().p;
    return std::pow(std::abs(model.merton().y_n), 1.0 - p) * std::pow(e.wealth(), p) / p;
}

inline InstanceCheck check_instance(const FreeBoundarySolution& sol, const Endowment& e) {
    InstanceCheck c;
    c.integral_residual = sol.integral_residual;
    c.min_interior_gprime = std::numeric_limits<double>::infinity();
    constexpr int kGrid = 200;
    for (int i = 1; i < kGrid; ++i) {
        const double x = sol.x_lo + (sol.x_hi - sol.x_lo) * i / kGrid;
        c.min_interior_gprime = std::min(c.min_interior_gprime, eval_leg(sol.leg, x).gprime);
    }
    c.f_err_lo = std::abs(deflator_f(sol, sol.x_lo));
    c.f_err_hi = std::abs(deflator_f(sol, sol.x_hi) - std::log1p(-sol.lambda()));
    c.slopes = wedge_slopes(sol);
    c.h = h_profile(sol);
    c.hjb_max = hjb_max_residual(sol);
    c.u = value_u(sol, e).u;
    c.zeta0 = frictionless_value(sol.model, e);
    const double p = sol.params().p;
    for (double k : {0.5, 2.0}) {
        Endowment ek = e;
        ek.eta_b *= k;
        ek.eta_s *= k;
        const double uk = value_u(sol, ek).u;
        c.homogeneity_err = std::max(c.homogeneity_err, std::abs(uk / (std::pow(k, p) * c.u) - 1.0));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Cross-validation report

inline const std::vector<std::string>& report_quantities() {
    static const std::vector<std::string> q{"x_lo", "x_hi", "pi_lo", "pi_hi", "u"};
    return q;
}

struct ValidationRow {
    double lambda = 0.0;
    double x_lo = std::numeric_limits<double>::quiet_NaN();
    double x_hi = std::numeric_limits<double>::quiet_NaN();
    double pi_lo = std::numeric_limits<double>::quiet_NaN();
    double pi_hi = std::numeric_limits<double>::quiet_NaN();
    double u = std::numeric_limits<double>::quiet_NaN();
    /// pred[q][k-1] is the order-k truncation of quantity q; diff = numeric - pred.
    std::map<std::string, std::vector<double>> pred;
    std::map<std::string, std::vector<double>> diff;
    double hjb_max_residual = std::numeric_limits<double>::quiet_NaN();
    double h_min_abs = std::numeric_limits<double>::quiet_NaN();
    double f_err_lo = std::numeric_limits<double>::quiet_NaN();
    double f_err_hi = std::numeric_limits<double>::quiet_NaN();
    int h_sign = 0;
    std::string status = "ok";  ///< "ok", an error code name, or "invariant:<names>"

    double numeric(const std::string& q) const {
        if (q == "x_lo") return x_lo;
        if (q == "x_hi") return x_hi;
        if (q == "pi_lo") return pi_lo;
        if (q == "pi_hi") return pi_hi;
        if (q == "u") return u;
        throw Error(ErrorCode::InvalidInput, "unknown quantity " + q);
    }
};

struct ValidationReport {
    MarketParams params;
    Endowment endow;
    int order = 0;
    std::vector<ValidationRow> rows;

    bool all_ok() const {
        return std::all_of(rows.begin(), rows.end(), [](const ValidationRow& r) { return r.status == "ok"; });
    }
};

/// Half-decade grid 1e-6, 3.16e-6, ..., 1e-2.
inline std::vector<double> default_lambda_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 8; ++k) g.push_back(std::pow(10.0, -6.0 + 0.5 * k));
    return g;
}

/// Endowment whose stock proportion equals pi, with unit frictionless wealth
/// scale: eta_B = 1 when pi < 1, otherwise a leveraged eta_B = -1.
inline Endowment merton_line_endowment(double pi) {
    Endowment e;
    e.s0 = 1.0;
    if (pi < 1.0) {
        e.eta_b = 1.0;
        e.eta_s = pi / (1.0 - pi);
    } else {
        e.eta_b = -1.0;
        e.eta_s = pi / (pi - 1.0);
    }
    return e;
}

inline ValidationReport cross_validate(const MarketParams& params, std::vector<double> grid, int n,
                                       std::optional<Endowment> endow = std::nullopt) {
    const Model base(params);
    ValidationReport rep;
    rep.params = params;
    rep.order = n;
    rep.endow = endow.value_or(merton_line_endowment(base.merton().pi));
    check_solvent(rep.endow, 0.0);
    std::sort(grid.begin(), grid.end());

    const ExpansionBundle bundle = build_expansion(base, n);
    const ValueSeries value = compute_value_series(bundle, rep.endow, classify_endowment(rep.endow, base.merton().pi));

    for (double lam : grid) {
        ValidationRow row;
        row.lambda = lam;
        for (const auto& q : report_quantities()) {
            row.pred[q].assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
            row.diff[q].assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
        }
        for (int k = 1; k <= n; ++k) {
            const auto i = static_cast<std::size_t>(k - 1);
            row.pred["x_lo"][i] = truncated_sum(bundle.alpha_series, lam, k);
            row.pred["x_hi"][i] = truncated_sum(bundle.x_hi_series, lam, k);
            row.pred["pi_lo"][i] = truncated_sum(bundle.wedge_lo, lam, k);
            row.pred["pi_hi"][i] = truncated_sum(bundle.wedge_hi, lam, k);
            row.pred["u"][i] = value.evaluate(lam, k);
        }
        try {
            const Model model = base.with_lambda(lam);
            ShootingOptions opt;
            opt.alpha_guess = truncated_sum(bundle.alpha_series, lam, n);
            const FreeBoundarySolution sol = solve_free_boundary(model, opt);
            const InstanceCheck chk = check_instance(sol, rep.endow);
            row.x_lo = sol.x_lo;
            row.x_hi = sol.x_hi;
            row.pi_lo = chk.slopes.pi_lo;
            row.pi_hi = chk.slopes.pi_hi;
            row.u = chk.u;
            row.hjb_max_residual = chk.hjb_max;
            row.h_min_abs = chk.h.min_abs;
            row.h_sign = chk.h.sign;
            row.f_err_lo = chk.f_err_lo;
            row.f_err_hi = chk.f_err_hi;
            for (const auto& q : report_quantities())
                for (int k = 0; k < n; ++k) row.diff[q][k] = row.numeric(q) - row.pred[q][k];
            const auto bad = chk.violations(model);
            if (!bad.empty()) {
                row.status = "invariant:";
                for (std::size_t i = 0; i < bad.size(); ++i) row.status += (i ? "+" : "") + bad[i];
            }
        } catch (const Error& e) {
            row.status = to_string(e.code());
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

/// Least-squares slope of log|diff| against log(lambda) over the `points`
/// smallest lambdas with a usable difference.
inline double convergence_slope(const ValidationReport& rep, const std::string& quantity, int truncation,
                                int points = 6) {
    if (truncation < 1 || truncation > rep.order) {
        throw Error(ErrorCode::InvalidInput, "truncation outside the report's orders");
    }
    std::vector<const ValidationRow*> rows;
    for (const auto& r : rep.rows) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->lambda < b->lambda; });

    std::vector<double> lx, ly;
    int floor_hits = 0;
    for (const auto* r : rows) {
        if (static_cast<int>(lx.size()) >= points) break;
        const auto it = r->diff.find(quantity);
        if (it == r->diff.end()) throw Error(ErrorCode::InvalidInput, "unknown quantity " + quantity);
        const double d = it->second[static_cast<std::size_t>(truncation - 1)];
        if (!std::isfinite(d) || !(r->lambda > 0.0)) continue;
        const double ref = std::max(1.0, std::abs(r->numeric(quantity)));
        if (std::abs(d) <= 64.0 * std::numeric_limits<double>::epsilon() * ref) {
            ++floor_hits;
            continue;
        }
        lx.push_back(std::log(r->lambda));
        ly.push_back(std::log(std::abs(d)));
    }
    if (lx.size() < 3) {
        std::ostringstream os;
        os << "only " << lx.size() << " usable differences for " << quantity << " (" << floor_hits
           << " at the floating-point floor)";
        throw Error(ErrorCode::DegenerateFit, os.str());
    }
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0.0) throw Error(ErrorCode::DegenerateFit, "all lambdas coincide");
    return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Serialization. Numbers carry 17 significant digits so parsing is exact.

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> csv_header(int order) {
    std::vector<std::string> h{"lambda", "x_lo_num", "x_hi_num", "pi_lo_num", "pi_hi_num", "u_num"};
    for (int k = 1; k <= order; ++k) {
        for (const auto& q : report_quantities()) {
            h.push_back(q + "_pred_" + std::to_string(k));
            h.push_back(q + "_diff_" + std::to_string(k));
        }
    }
    for (const char* c : {"hjb_max_residual", "h_min_abs", "f_err_lo", "f_err_hi", "h_sign", "status"})
        h.emplace_back(c);
    return h;
}

inline std::string to_csv(const ValidationReport& rep) {
    std::ostringstream os;
    const auto header = csv_header(rep.order);
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& r : rep.rows) {
        os << format_g17(r.lambda) << "," << format_g17(r.x_lo) << "," << format_g17(r.x_hi) << ","
           << format_g17(r.pi_lo) << "," << format_g17(r.pi_hi) << "," << format_g17(r.u);
        for (int k = 0; k < rep.order; ++k) {
            for (const auto& q : report_quantities()) {
                os << "," << format_g17(r.pred.at(q)[static_cast<std::size_t>(k)]) << ","
                   << format_g17(r.diff.at(q)[static_cast<std::size_t>(k)]);
            }
        }
        os << "," << format_g17(r.hjb_max_residual) << "," << format_g17(r.h_min_abs) << ","
           << format_g17(r.f_err_lo) << "," << format_g17(r.f_err_hi) << "," << r.h_sign << "," << r.status
           << "\n";
    }
    return os.str();
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidInput, "not a number: '" + s + "'");
    }
    if (pos != s.size()) throw Error(ErrorCode::InvalidInput, "trailing characters in '" + s + "'");
    return v;
}

}  // namespace detail

/// Parses the rows of a CSV report (the header fixes the order). Market
/// parameters and endowment are not part of the CSV and stay defaulted.
inline ValidationReport parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorCode::InvalidInput, "empty CSV report");
    const auto header = detail::split(line, ',');
    const int fixed = 6 + 6;
    const int per_order = 2 * static_cast<int>(report_quantities().size());
    if (static_cast<int>(header.size()) < fixed || (header.size() - fixed) % per_order != 0) {
        throw Error(ErrorCode::InvalidInput, "unexpected CSV header");
    }
    ValidationReport rep;
    rep.order = static_cast<int>(header.size() - fixed) / per_order;
    if (header != csv_header(rep.order)) throw Error(ErrorCode::InvalidInput, "unexpected CSV header");

    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != header.size()) throw Error(ErrorCode::InvalidInput, "CSV row has the wrong field count");
        ValidationRow r;
        std::size_t i = 0;
        r.lambda = detail::parse_double(f[i++]);
        r.x_lo = detail::parse_double(f[i++]);
        r.x_hi = detail::parse_double(f[i++]);
        r.pi_lo = detail::parse_double(f[i++]);
        r.pi_hi = detail::parse_double(f[i++]);
        r.u = detail::parse_double(f[i++]);
        for (const auto& q : report_quantities()) {
            r.pred[q].resize(static_cast<std::size_t>(rep.order));
            r.diff[q].resize(static_cast<std::size_t>(rep.order));
        }
        for (int k = 0; k < rep.order; ++k) {
            for (const auto& q : report_quantities()) {
                r.pred[q][static_cast<std::size_t>(k)] = detail::parse_double(f[i++]);
                r.diff[q][static_cast<std::size_t>(k)] = detail::parse_double(f[i++]);
            }
        }
        r.hjb_max_residual = detail::parse_double(f[i++]);
        r.h_min_abs = detail::parse_double(f[i++]);
        r.f_err_lo = detail::parse_double(f[i++]);
        r.f_err_hi = detail::parse_double(f[i++]);
        r.h_sign = static_cast<int>(detail::parse_double(f[i++]));
        r.status = f[i++];
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

namespace detail {

inline nlohmann::ordered_json num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

inline double from_json_num(const nlohmann::ordered_json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ValidationReport& rep) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["params"] = {{"mu", rep.params.mu},
                   {"sigma", rep.params.sigma},
                   {"delta", rep.params.delta},
                   {"p", rep.params.p}};
    j["endowment"] = {{"eta_b", rep.endow.eta_b}, {"eta_s", rep.endow.eta_s}, {"s0", rep.endow.s0}};
    j["order"] = rep.order;
    ordered_json rows = ordered_json::array();
    for (const auto& r : rep.rows) {
        ordered_json o;
        o["lambda"] = r.lambda;
        o["x_lo_num"] = detail::num(r.x_lo);
        o["x_hi_num"] = detail::num(r.x_hi);
        o["pi_lo_num"] = detail::num(r.pi_lo);
        o["pi_hi_num"] = detail::num(r.pi_hi);
        o["u_num"] = detail::num(r.u);
        for (const auto& q : report_quantities()) {
            ordered_json p = ordered_json::array(), d = ordered_json::array();
            for (int k = 0; k < rep.order; ++k) {
                p.push_back(detail::num(r.pred.at(q)[static_cast<std::size_t>(k)]));
                d.push_back(detail::num(r.diff.at(q)[static_cast<std::size_t>(k)]));
            }
            o[q + "_pred"] = p;
            o[q + "_diff"] = d;
        }
        o["hjb_max_residual"] = detail::num(r.hjb_max_residual);
        o["h_min_abs"] = detail::num(r.h_min_abs);
        o["f_err_lo"] = detail::num(r.f_err_lo);
        o["f_err_hi"] = detail::num(r.f_err_hi);
        o["h_sign"] = r.h_sign;
        o["status"] = r.status;
        rows.push_back(std::move(o));
    }
    j["rows"] = std::move(rows);
    return j;
}

inline ValidationReport report_from_json(const nlohmann::ordered_json& j) {
    ValidationReport rep;
    try {
        rep.params.mu = j.at("params").at("mu").get<double>();
        rep.params.sigma = j.at("params").at("sigma").get<double>();
        rep.params.delta = j.at("params").at("delta").get<double>();
        rep.params.p = j.at("params").at("p").get<double>();
        rep.endow.eta_b = j.at("endowment").at("eta_b").get<double>();
        rep.endow.eta_s = j.at("endowment").at("eta_s").get<double>();
        rep.endow.s0 = j.at("endowment").at("s0").get<double>();
        rep.order = j.at("order").get<int>();
        for (const auto& o : j.at("rows")) {
            ValidationRow r;
            r.lambda = o.at("lambda").get<double>();
            r.x_lo = detail::from_json_num(o.at("x_lo_num"));
            r.x_hi = detail::from_json_num(o.at("x_hi_num"));
            r.pi_lo = detail::from_json_num(o.at("pi_lo_num"));
            r.pi_hi = detail::from_json_num(o.at("pi_hi_num"));
            r.u = detail::from_json_num(o.at("u_num"));
            for (const auto& q : report_quantities()) {
                for (const auto& v : o.at(q + "_pred")) r.pred[q].push_back(detail::from_json_num(v));
                for (const auto& v : o.at(q + "_diff")) r.diff[q].push_back(detail::from_json_num(v));
            }
            r.hjb_max_residual = detail::from_json_num(o.at("hjb_max_residual"));
            r.h_min_abs = detail::from_json_num(o.at("h_min_abs"));
            r.f_err_lo = detail::from_json_num(o.at("f_err_lo"));
            r.f_err_hi = detail::from_json_num(o.at("f_err_hi"));
            r.h_sign = o.at("h_sign").get<int>();
            r.status = o.at("status").get<std::string>();
            rep.rows.push_back(std::move(r));
        }
    } catch (const nlohmann::ordered_json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("malformed JSON report: ") + e.what());
    }
    return rep;
}

}  // namespace mertontc
