#pragma once

// One shooting leg: integrate g' = L(x, g), I' = g'/x from (alpha, T(alpha))
// until g' returns to zero after having been positive.
//
// Dormand-Prince 5(4) with Hairer's continuous extension and PI step control.
// The state carries g - T(alpha) rather than g so the tolerance tracks the
// small variation of g across a narrow strip instead of |g| itself.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <vector>

#include "mertontc/error.hpp"
#include "mertontc/model.hpp"

namespace mertontc {

inline constexpr double kDefaultLegTol = 1e-10;

/// Continuous extension of one accepted step, valid on [x0, x0 + h].
struct DenseStep {
    double x0 = 0.0;
    double h = 0.0;
    std::array<std::array<double, 2>, 5> r{};  // r[k][component]

    std::array<double, 2> value(double x) const {
        const double t = (x - x0) / h;
        const double s = 1.0 - t;
        std::array<double, 2> y{};
        for (int c = 0; c < 2; ++c) {
            y[c] = r[0][c] + t * (r[1][c] + s * (r[2][c] + t * (r[3][c] + s * r[4][c])));
        }
        return y;
    }

    std::array<double, 2> derivative(double x) const {
        const double t = (x - x0) / h;
        const double s = 1.0 - t;
        std::array<double, 2> d{};
        for (int c = 0; c < 2; ++c) {
            const double P = r[2][c] + t * (r[3][c] + s * r[4][c]);
            const double dP = r[3][c] + (1.0 - 2.0 * t) * r[4][c];
            const double Q = r[1][c] + s * P;
            const double dQ = -P + s * dP;
            d[c] = (Q + t * dQ) / h;
        }
        return d;
    }
};

struct LegSolution {
    double alpha = 0.0;
    double beta = 0.0;
    double g_alpha = 0.0;     ///< T(alpha)
    double g_beta = 0.0;
    double integral_I = 0.0;  ///< int_alpha^beta g'(t)/t dt
    int steps = 0;
    Field field;
    std::vector<DenseStep> dense;  // empty for the degenerate leg alpha = x_N

    bool degenerate() const { return dense.empty(); }
};

struct LegPoint {
    double g = 0.0;
    double gprime = 0.0;  ///< L(x, g), never a numerical derivative
    double I = 0.0;
};

namespace detail {

inline const DenseStep& find_step(const LegSolution& leg, double x) {
    auto it = std::upper_bound(leg.dense.begin(), leg.dense.end(), x,
                               [](double v, const DenseStep& s) { return v < s.x0; });
    if (it != leg.dense.begin()) --it;
    return *it;
}

inline void check_range(const LegSolution& leg, double x) {
    if (!(x >= leg.alpha && x <= leg.beta)) {
        std::ostringstream os;
        os.precision(17);
        os << "x = " << x << " outside leg [" << leg.alpha << ", " << leg.beta << "]";
        throw Error(ErrorCode::OutOfRange, os.str());
    }
}

}  // namespace detail

inline LegPoint eval_leg(const LegSolution& leg, double x) {
    detail::check_range(leg, x);
    if (leg.degenerate()) return {leg.g_alpha, 0.0, 0.0};
    if (x == leg.alpha) return {leg.g_alpha, eval_field(leg.field, x, leg.g_alpha), 0.0};
    const auto y = detail::find_step(leg, x).value(x);
    const double g = leg.g_alpha + y[0];
    return {g, eval_field(leg.field, x, g), y[1]};
}

/// Slope of the dense interpolant for g. Unlike LegPoint::gprime this does not
/// go through L, so it can serve as an independent check on the ODE.
inline double leg_interpolant_slope(const LegSolution& leg, double x) {
    detail::check_range(leg, x);
    if (leg.degenerate()) return 0.0;
    return detail::find_step(leg, x).derivative(x)[0];
}

/// Integrates one leg from alpha; see the header comment for the stopping rule.
inline LegSolution integrate_to_flat(double alpha, const Model& model, double tol = kDefaultLegTol) {
    const auto& mq = model.merton();
    const double x_n = mq.x_n;
    const double yscale = 1.0 + std::abs(mq.y_n);
    if (!(alpha > 0.0) || alpha > x_n || !(tol > 0.0)) {
        std::ostringstream os;
        os.precision(17);
        os << "leg start alpha = " << alpha << " must lie in (0, x_N = " << x_n << "]";
        throw Error(ErrorCode::OutOfDomain, os.str());
    }

    LegSolution leg;
    leg.alpha = alpha;
    leg.field = model.field();
    if (alpha == x_n) {
        leg.beta = x_n;
        leg.g_alpha = leg.g_beta = mq.y_n;
        return leg;
    }
    leg.g_alpha = model.T(alpha);

    const Field& field = leg.field;
    const double g0 = leg.g_alpha;
    auto rhs = [&](double x, const std::array<double, 2>& y) {
        const double gp = eval_field(field, x, g0 + y[0]);
        return std::array<double, 2>{gp, gp / x};
    };

    // Dormand-Prince 5(4) tableau.
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                     a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                     a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                     a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                     e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                     d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                     d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

    constexpr double eps = std::numeric_limits<double>::epsilon();
    const std::array<double, 2> floor_abs{16.0 * eps * yscale, 16.0 * eps * yscale / x_n};
    const double arm_threshold = 1e-9 * yscale;
    const double horizon = 3.0 * x_n;
    constexpr int kMaxSteps = 2'000'000;

    double x = alpha;
    std::array<double, 2> y{0.0, 0.0};
    auto k1 = rhs(x, y);
    double h = std::min(1e-3 * (x_n - alpha), 0.1 * x_n);
    double err_old = 1e-4;
    bool armed = false;
    bool rejected = false;

    for (;;) {
        if (leg.steps > kMaxSteps) throw Error(ErrorCode::StiffnessFailure, "step budget exhausted");
        if (h < 16.0 * eps * std::abs(x)) {
            std::ostringstream os;
            os.precision(17);
            os << "step size underflow at x = " << x;
            throw Error(ErrorCode::StiffnessFailure, os.str());
        }
        if (x >= horizon) {
            std::ostringstream os;
            os.precision(17);
            os << "g' does not return to zero before x = " << horizon << " (alpha = " << alpha << ")";
            throw Error(ErrorCode::NoFlatPoint, os.str());
        }
        h = std::min(h, horizon - x);

        std::array<double, 2> y2, y3, y4, y5, y6, y7;
        for (int c = 0; c < 2; ++c) y2[c] = y[c] + h * a21 * k1[c];
        const auto k2 = rhs(x + c2 * h, y2);
        for (int c = 0; c < 2; ++c) y3[c] = y[c] + h * (a31 * k1[c] + a32 * k2[c]);
        const auto k3 = rhs(x + c3 * h, y3);
        for (int c = 0; c < 2; ++c) y4[c] = y[c] + h * (a41 * k1[c] + a42 * k2[c] + a43 * k3[c]);
        const auto k4 = rhs(x + c4 * h, y4);
        for (int c = 0; c < 2; ++c)
            y5[c] = y[c] + h * (a51 * k1[c] + a52 * k2[c] + a53 * k3[c] + a54 * k4[c]);
        const auto k5 = rhs(x + c5 * h, y5);
        for (int c = 0; c < 2; ++c)
            y6[c] = y[c] + h * (a61 * k1[c] + a62 * k2[c] + a63 * k3[c] + a64 * k4[c] + a65 * k5[c]);
        const auto k6 = rhs(x + h, y6);
        for (int c = 0; c < 2; ++c)
            y7[c] = y[c] + h * (a71 * k1[c] + a73 * k3[c] + a74 * k4[c] + a75 * k5[c] + a76 * k6[c]);
        const double x_new = x + h;
        const auto k7 = rhs(x_new, y7);

        double err = 0.0;
        for (int c = 0; c < 2; ++c) {
            const double ec = h * (e1 * k1[c] + e3 * k3[c] + e4 * k4[c] + e5 * k5[c] + e6 * k6[c] + e7 * k7[c]);
            const double sc = floor_abs[c] + tol * std::max(std::abs(y[c]), std::abs(y7[c]));
            err += (ec / sc) * (ec / sc);
        }
        err = std::sqrt(err / 2.0);
        if (!std::isfinite(err)) err = 1e10;

        // Hairer's PI controller (beta = 0.04).
        const double fac11 = std::pow(err, 0.17);
        double fac = fac11 / std::pow(err_old, 0.04) / 0.9;
        fac = std::clamp(fac, 0.2, 10.0);

        if (err > 1.0) {
            h /= std::min(10.0, fac11 / 0.9);
            rejected = true;
            continue;
        }

        DenseStep ds;
        ds.x0 = x;
        ds.h = h;
        for (int c = 0; c < 2; ++c) {
            const double ydiff = y7[c] - y[c];
            const double bspl = h * k1[c] - ydiff;
            ds.r[0][c] = y[c];
            ds.r[1][c] = ydiff;
            ds.r[2][c] = bspl;
            ds.r[3][c] = ydiff - h * k7[c] - bspl;
            ds.r[4][c] = h * (d1 * k1[c] + d3 * k3[c] + d4 * k4[c] + d5 * k5[c] + d6 * k6[c] + d7 * k7[c]);
        }
        leg.dense.push_back(ds);
        ++leg.steps;

        const double gp_new = k7[0];
        if (!armed) {
            if (gp_new < -arm_threshold) {
                std::ostringstream os;
                os.precision(17);
                os << "g' turns negative before becoming positive (alpha = " << alpha << ")";
                throw Error(ErrorCode::NoFlatPoint, os.str());
            }
            if (gp_new > arm_threshold) armed = true;
        } else if (gp_new <= 0.0) {
            // Bisect the sign change of L along the interpolant down to adjacent doubles.
            auto phi = [&](double t) { return eval_field(field, t, g0 + ds.value(t)[0]); };
            double lo = x, hi = x_new;
            double flo = phi(lo);
            if (!(flo > 0.0)) flo = k1[0];
            double fhi = gp_new;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (!(mid > lo && mid < hi)) break;
                const double fm = phi(mid);
                if (fm > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                    fhi = fm;
                }
            }
            const double b = std::abs(flo) <= std::abs(fhi) ? lo : hi;
            if (std::min(std::abs(flo), std::abs(fhi)) > 1e-12 * (1.0 + std::abs(mq.y_n))) {
                // g' changed sign through a pole of L, not through zero.
                std::ostringstream os;
                os.precision(17);
                os << "g' changes sign through a singularity near x = " << b << " (alpha = " << alpha << ")";
                throw Error(ErrorCode::NoFlatPoint, os.str());
            }
            const auto yb = ds.value(b);
            leg.beta = b;
            leg.g_beta = g0 + yb[0];
            leg.integral_I = yb[1];
            return leg;
        }

        x = x_new;
        y = y7;
        k1 = k7;
        err_old = std::max(err, 1e-4);
        double h_new = h / fac;
        if (rejected) h_new = std::min(h_new, h);
        rejected = false;
        h = h_new;
    }
}

}  // namespace mertontc
