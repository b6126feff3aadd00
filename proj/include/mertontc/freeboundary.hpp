#pragma once

// Shooting for the free boundary: find alpha with I(beta(alpha)) = ln(1/(1-lambda)),
// then x_lo = alpha and x_hi = beta(alpha). Everything downstream (wedge
// slopes, deflator, value) is read off the winning leg.

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <sstream>
#include <utility>

#include "mertontc/error.hpp"
#include "mertontc/model.hpp"
#include "mertontc/odeint.hpp"

namespace mertontc {

struct ShootingOptions {
    double tol = 1e-10;       ///< bound on |I(x_hi) - ln(1/(1-lambda))|
    double leg_tol = 1e-12;   ///< local error tolerance of each leg
    double scan_eps0 = 1e-6;  ///< first relative offset of the geometric scan
    std::optional<double> alpha_guess;  ///< e.g. the series prediction of x_lo
};

struct FreeBoundarySolution {
    Model model;
    double x_lo = 0.0;
    double x_hi = 0.0;
    LegSolution leg;
    double target = 0.0;             ///< ln(1/(1-lambda))
    double integral_residual = 0.0;  ///< I(x_hi) - target
    int legs = 0;                    ///< legs integrated during the search

    const MarketParams& params() const { return model.params(); }
    double lambda() const { return model.lambda(); }
};

namespace detail {

class Shooter {
public:
    Shooter(const Model& model, const ShootingOptions& opt)
        : model_(model), opt_(opt), target_(-std::log1p(-model.lambda())) {}

    double target() const { return target_; }
    int legs() const { return legs_; }
    bool have_best() const { return best_.has_value(); }
    const LegSolution& best() const { return *best_; }
    double best_residual() const { return best_res_; }

    /// I(beta(alpha)) - target; a leg that fails to close counts as short of the target.
    double operator()(double alpha) {
        ++legs_;
        last_ok_ = false;
        try {
            LegSolution leg = integrate_to_flat(alpha, model_, opt_.leg_tol);
            if (!(leg.beta > model_.merton().x_n)) {
                std::ostringstream os;
                os.precision(17);
                os << "leg from alpha = " << alpha << " closes at " << leg.beta << ", left of x_N";
                last_failure_ = os.str();
                return -target_;
            }
            const double r = leg.integral_I - target_;
            if (!best_ || std::abs(r) < std::abs(best_res_)) {
                best_res_ = r;
                best_ = std::move(leg);
            }
            last_ok_ = true;
            return r;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::BadRange || e.code() == ErrorCode::InvalidInput) throw;
            last_failure_ = e.what();
            return -target_;
        }
    }

    /// Whether the most recent leg closed properly.
    bool last_ok() const { return last_ok_; }

    const std::string& last_failure() const { return last_failure_; }

private:
    const Model& model_;
    const ShootingOptions& opt_;
    double target_;
    int legs_ = 0;
    bool last_ok_ = false;
    std::optional<LegSolution> best_;
    double best_res_ = std::numeric_limits<double>::infinity();
    std::string last_failure_;
};

struct Bracket {
    double lo, hi, f_lo, f_hi;  // f_lo >= 0 > f_hi; lo < hi
};

/// Legs from alpha in (bad, good) with good closing short of the target: bisect
/// towards bad until a leg overshoots. Large strips can run into the singular
/// set of L, so a failed leg past a good one narrows the search instead of
/// ending it.
inline std::optional<Bracket> probe_towards(Shooter& shoot, double good, double f_good, double bad, double x_n) {
    for (int it = 0; it < 60 && good - bad > 1e-12 * x_n; ++it) {
        const double mid = 0.5 * (good + bad);
        const double f = shoot(mid);
        if (!shoot.last_ok()) {
            bad = mid;
        } else if (f >= 0.0) {
            return Bracket{mid, good, f, f_good};
        } else {
            good = mid;
            f_good = f;
        }
    }
    return std::nullopt;
}

inline std::optional<Bracket> scan_bracket(Shooter& shoot, double x_n, double eps0) {
    double prev = x_n;
    double f_prev = -shoot.target();
    bool have_good = false;
    for (int k = 0; k < 64; ++k) {
        const double a = x_n * (1.0 - std::ldexp(eps0, k));
        if (!(a > 0.0)) return have_good ? probe_towards(shoot, prev, f_prev, 0.0, x_n) : std::nullopt;
        const double f = shoot(a);
        if (!shoot.last_ok()) {
            // Failures next to x_N are resolution noise; past a closed leg they mark the singular set.
            if (have_good) return probe_towards(shoot, prev, f_prev, a, x_n);
            continue;
        }
        if (f >= 0.0) return Bracket{a, prev, f, f_prev};
        prev = a;
        f_prev = f;
        have_good = true;
    }
    return std::nullopt;
}

inline std::optional<Bracket> warm_bracket(Shooter& shoot, double x_n, double guess) {
    if (!(guess > 0.0 && guess < x_n)) return std::nullopt;
    const double f0 = shoot(guess);
    if (!shoot.last_ok()) return std::nullopt;
    double step = 0.02 * (x_n - guess);
    if (f0 >= 0.0) {
        // Too wide a strip: move right towards x_N.
        double lo = guess, f_lo = f0;
        for (int k = 0; k < 30; ++k) {
            const double a = std::min(lo + step, 0.5 * (lo + x_n));
            const double f = shoot(a);
            if (!shoot.last_ok()) return std::nullopt;
            if (f < 0.0) return Bracket{lo, a, f_lo, f};
            lo = a;
            f_lo = f;
            step *= 2.0;
        }
    } else {
        double hi = guess, f_hi = f0;
        for (int k = 0; k < 30; ++k) {
            const double a = std::max(hi - step, 0.0);
            const double f = a > 0.0 ? shoot(a) : 0.0;
            if (!(a > 0.0) || !shoot.last_ok()) return probe_towards(shoot, hi, f_hi, a, x_n);
            if (f >= 0.0) return Bracket{a, hi, f, f_hi};
            hi = a;
            f_hi = f;
            step *= 2.0;
        }
    }
    return std::nullopt;
}

}  // namespace detail

inline FreeBoundarySolution solve_free_boundary(const Model& model, const ShootingOptions& opt = {}) {
    const double x_n = model.merton().x_n;
    detail::Shooter shoot(model, opt);

    FreeBoundarySolution sol{model, x_n, x_n, {}, shoot.target(), 0.0, 0};
    if (model.lambda() == 0.0) {
        sol.leg = integrate_to_flat(x_n, model, opt.leg_tol);
        return sol;
    }

    std::optional<detail::Bracket> br;
    if (opt.alpha_guess) br = detail::warm_bracket(shoot, x_n, *opt.alpha_guess);
    if (!br) br = detail::scan_bracket(shoot, x_n, opt.scan_eps0);
    if (!br) {
        std::ostringstream os;
        os << "no alpha in (0, x_N) attains the target integral " << shoot.target()
           << " (lambda too large for these parameters?)";
        if (!shoot.last_failure().empty()) os << "; last leg failure: " << shoot.last_failure();
        throw Error(ErrorCode::BracketFailure, os.str());
    }

    if (br->f_lo != 0.0) {
        const double width_tol = 4.0 * std::numeric_limits<double>::epsilon() * x_n;
        auto done = [&](double a, double b) {
            return std::abs(b - a) <= width_tol ||
                   std::abs(shoot.best_residual()) <= 1e-13 * shoot.target();
        };
        std::uintmax_t max_iter = 200;
        boost::math::tools::toms748_solve(std::ref(shoot), br->lo, br->hi, br->f_lo, br->f_hi, done,
                                          max_iter);
    }

    sol.leg = shoot.best();
    sol.x_lo = sol.leg.alpha;
    sol.x_hi = sol.leg.beta;
    sol.integral_residual = shoot.best_residual();
    sol.legs = shoot.legs();
    if (!(std::abs(sol.integral_residual) < opt.tol)) {
        std::ostringstream os;
        os << "shooting stalled with integral residual " << sol.integral_residual << " >= " << opt.tol;
        throw Error(ErrorCode::BracketFailure, os.str());
    }
    return sol;
}

struct WedgeSlopes {
    double pi_lo = 0.0;
    double pi_hi = 0.0;
};

inline WedgeSlopes wedge_slopes(const FreeBoundarySolution& sol) {
    const double p = sol.params().p;
    const double lam = sol.lambda();
    WedgeSlopes w;
    w.pi_lo = (1.0 - p) * sol.x_lo / (p * sol.leg.g_alpha);
    w.pi_hi = (1.0 - p) * sol.x_hi / ((1.0 - p) * lam * sol.x_hi + p * (1.0 - lam) * sol.leg.g_beta);
    return w;
}

/// f(x) = ln(1-lambda) + int_x^{x_hi} g'(t)/t dt.
inline double deflator_f(const FreeBoundarySolution& sol, double x) {
    const double I = eval_leg(sol.leg, x).I;
    return std::log1p(-sol.lambda()) + (sol.leg.integral_I - I);
}

/// Stock proportion of wealth at state x, measured in shadow prices:
/// (1-p)x / ((1-p)(1-e^f)x + p g e^f).
inline double proportion_map(const FreeBoundarySolution& sol, double x) {
    const double p = sol.params().p;
    const auto pt = eval_leg(sol.leg, x);
    const double f = std::log1p(-sol.lambda()) + (sol.leg.integral_I - pt.I);
    return (1.0 - p) * x / (-(1.0 - p) * std::expm1(f) * x + p * pt.g * std::exp(f));
}

struct XHat {
    double x = 0.0;
    EndowmentCase region = EndowmentCase::On;  ///< relative to [pi_lo, pi_hi]
};

inline XHat locate_xhat(const FreeBoundarySolution& sol, const Endowment& e) {
    check_solvent(e, sol.lambda());
    const double r = e.proportion();
    const WedgeSlopes w = wedge_slopes(sol);
    if (r > w.pi_hi) return {sol.x_hi, EndowmentCase::Above};
    if (r < w.pi_lo) return {sol.x_lo, EndowmentCase::Below};
    if (sol.x_lo == sol.x_hi) return {sol.x_lo, EndowmentCase::On};

    // The proportion map increases from pi_lo at x_lo to pi_hi at x_hi.
    double lo = sol.x_lo, hi = sol.x_hi;
    double f_lo = proportion_map(sol, lo) - r;
    double f_hi = proportion_map(sol, hi) - r;
    if (f_lo > 0.0 || f_hi < 0.0) {
        if (std::abs(f_lo) <= 1e-14 * r) return {lo, EndowmentCase::On};
        if (std::abs(f_hi) <= 1e-14 * r) return {hi, EndowmentCase::On};
        std::ostringstream os;
        os << "proportion " << r << " not bracketed by the proportion map on [x_lo, x_hi]";
        throw Error(ErrorCode::RootNotBracketed, os.str());
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        const double fm = proportion_map(sol, mid) - r;
        if (fm < 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    return {std::abs(f_lo) <= std::abs(f_hi) ? lo : hi, EndowmentCase::On};
}

struct ValuePoint {
    double u = 0.0;
    XHat xhat;
};

/// u = (1/p)(eta_B + eta_S S0 e^{f(x^)})^p |g(x^)|^{1-p}.
inline ValuePoint value_u(const FreeBoundarySolution& sol, const Endowment& e) {
    const double p = sol.params().p;
    ValuePoint v;
    v.xhat = locate_xhat(sol, e);
    const auto pt = eval_leg(sol.leg, v.xhat.x);
    const double f = std::log1p(-sol.lambda()) + (sol.leg.integral_I - pt.I);
    const double bond = e.eta_b + e.eta_s * e.s0 * std::exp(f);
    v.u = std::pow(bond, p) * std::pow(std::abs(pt.g), 1.0 - p) / p;
    return v;
}

}  // namespace mertontc
