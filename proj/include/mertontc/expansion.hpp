#pragma once

// Small-cost expansion in w = lambda^{1/3}.
//
// Pipeline: g~(z1, z2) solves dg/dz1 = L(z1, g) with g~(z2, z2) = T(z2) near
// (x_N, x_N); beta~(z2) is the non-diagonal zero set of dg~/dz1; G is the
// z1-antiderivative of (1/z1) dg~/dz1. The shooting condition then reads
//   1 - exp(G(z2, z2) - G(beta~(z2), z2)) = lambda,
// whose left side is (z2 - x_N)^3 c(z2). Taking cube roots and reverting
// gives x_lo = A(w), and everything else follows by substitution.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "mertontc/error.hpp"
#include "mertontc/model.hpp"
#include "mertontc/powerseries.hpp"

namespace mertontc {

inline constexpr int kDefaultSeriesOrder = 8;

template <typename Real>
struct BasicExpansionBundle {
    using U = BasicUnivariateSeries<Real>;
    using B = BasicBivariateSeries<Real>;

    MarketParams params;
    MertonQuantities merton;
    int order = 0;

    U t_series;        ///< T about x_N
    B g_series;        ///< a_ij about (x_N, x_N), orders (n+4, n+3)
    U beta_series;     ///< b_i about x_N, order n+2
    B G_series;        ///< about (x_N, x_N)
    U lambda_series;   ///< 1 - exp(G(z,z) - G(beta~(z),z)) about x_N
    U c_series;        ///< lambda_series / (z - x_N)^3, order n-1
    U F_series;        ///< real cube root of c_series
    U alpha_series;    ///< d_i: x_lo as a series in w, about 0
    U x_hi_series;     ///< beta~(A(w)), about 0
    U wedge_lo;        ///< pi_lo in w
    U wedge_hi;        ///< pi_hi in w

    // Diagnostics, all absolute.
    Real g_residual = 0;          ///< ODE and diagonal constraints of g~
    Real beta_residual = 0;       ///< dg~/dz1 along beta~
    Real low_order_residual = 0;  ///< orders 0..2 of lambda_series
    Real reversion_residual = 0;  ///< (A - x_N) F(A) against w
    Real reconstruction_residual = 0;  ///< 1 - exp(G(A,A) - G(B,A)) against w^3
    int g_sweeps = 0;

    Real scale() const {
        return std::max({Real(1), Real(std::abs(merton.y_n)), Real(merton.x_n)});
    }

    /// Largest pipeline constraint residual.
    Real residual_report() const {
        return std::max({g_residual, beta_residual, low_order_residual, reversion_residual,
                         reconstruction_residual});
    }
};

using ExpansionBundle = BasicExpansionBundle<double>;

namespace detail {

template <typename Real>
Real max_abs_from(const BasicUnivariateSeries<Real>& s, int from, int to) {
    Real m(0);
    for (int k = from; k <= std::min(to, s.order()); ++k) m = std::max(m, Real(std::abs(s[k])));
    return m;
}

template <typename Real, typename S>
S eval_quadratic(const BasicQuadratic<Real>& q, const S& x, const S& z) {
    return x * q.cx + x * x * q.cxx + z * q.cz + x * z * q.cxz + z * z * q.czz + q.c0;
}

}  // namespace detail

/// T about x_N to the given order.
template <typename Real = double>
BasicUnivariateSeries<Real> compute_t_series(const Model& model, int order) {
    using U = BasicUnivariateSeries<Real>;
    const auto& m = model.params();
    const BasicMertonPoint<Real> pt(m);
    const Real p(m.p), s(model.merton().sgn_p), mu(m.mu), K(pt.margin);
    const Real xn(pt.x_n);
    // At x_N the radicand p(p + 2 s p mu x - K x^2) collapses to p^2 since K x_N = 2 s p mu.
    U rad = U::zero(xn, std::max(order, 2));
    rad[0] = p * p;
    rad[1] = -Real(2) * s * p * p * mu;
    rad[2] = -p * K;
    rad = rad.truncated(order);
    const U x = U::variable(xn, order);
    U num = (x * mu + s) * (p * (Real(1) - p)) + pow(rad, Real(1) / Real(2)) * (Real(1) - p);
    return num / (Real(2) * Real(m.delta) * p);
}

/// a_ij on the rectangle (n+4, n+3). Sweeps the fixed-point map
///   a_{i+1,j} = [N/D]_{ij} / (i+1),   a_{0k} = t_k - sum_{i>=1} a_{i,k-i}
/// until it stops changing; coefficients of total degree d settle after d+1 sweeps.
template <typename Real = double>
BasicBivariateSeries<Real> compute_g_series(const Model& model, int n, Real* residual = nullptr,
                                            int* sweeps_used = nullptr) {
    using B = BasicBivariateSeries<Real>;
    using U = BasicUnivariateSeries<Real>;
    if (n < 1) throw Error(ErrorCode::InvalidInput, "series order must be >= 1");
    const int m1 = n + 4, m2 = n + 3;
    const BasicMertonPoint<Real> pt(model.params());
    const Real xn = pt.x_n, yn = pt.y_n;
    const BasicField<Real> field = make_field<Real>(model.params());

    {
        using std::abs;
        const Real d00 = field.denominator(xn, yn);
        if (abs(d00) <= Real(1e-12) * std::max(Real(1), field.denominator.magnitude(xn, yn))) {
            throw Error(ErrorCode::SingularDenominator, "denominator of L vanishes at N");
        }
    }

    const U t = compute_t_series<Real>(model, m2);
    const B x = B::variable_z1({xn, xn}, m1, m2);
    auto quotient = [&](const B& a) {
        return detail::eval_quadratic<Real>(field.numerator, x, a) /
               detail::eval_quadratic<Real>(field.denominator, x, a);
    };

    B a = B::constant({xn, xn}, yn, m1, m2);
    const int max_sweeps = m1 + m2 + 4;
    int sweep = 0;
    bool settled = false;
    for (; sweep < max_sweeps && !settled; ++sweep) {
        const B q = quotient(a);
        B next({xn, xn}, m1, m2);
        for (int i = 0; i < m1; ++i)
            for (int j = 0; j <= m2; ++j) next.at(i + 1, j) = q.at(i, j) / Real(i + 1);
        for (int k = 0; k <= m2; ++k) {
            Real acc = t[k];
            for (int i = 1; i <= std::min(k, m1); ++i) acc -= next.at(i, k - i);
            next.at(0, k) = acc;
        }
        settled = true;
        for (int i = 0; i <= m1 && settled; ++i)
            for (int j = 0; j <= m2; ++j)
                if (next.at(i, j) != a.at(i, j)) {
                    settled = false;
                    break;
                }
        a = std::move(next);
    }
    if (!settled) {
        // Rounding can leave the last bits oscillating; accept only if the constraints hold.
        const B q = quotient(a);
        Real worst(0);
        for (int i = 0; i < m1; ++i)
            for (int j = 0; j <= m2; ++j)
                worst = std::max(worst, Real(std::abs(q.at(i, j) - Real(i + 1) * a.at(i + 1, j))));
        const Real scale = std::max({Real(1), Real(std::abs(yn)), xn});
        if (!(worst < Real(1e-9) * scale)) {
            std::ostringstream os;
            os << "coefficient sweeps did not settle (residual " << static_cast<double>(worst) << ")";
            throw Error(ErrorCode::NoConvergence, os.str());
        }
    }
    if (sweeps_used) *sweeps_used = sweep;

    if (residual) {
        const B q = quotient(a);
        Real worst(0);
        for (int i = 0; i < m1; ++i)
            for (int j = 0; j <= m2; ++j)
                worst = std::max(worst, Real(std::abs(q.at(i, j) - Real(i + 1) * a.at(i + 1, j))));
        const U id = U::variable(xn, m2);
        const U diag = substitute(a, id, id) - t;
        worst = std::max(worst, diag.max_abs());
        *residual = worst;
    }
    return a;
}

/// b_i of beta~(z2) = sum b_i (z2 - x_N)^i, the zero set of dg~/dz1 other than z1 = z2.
template <typename Real = double>
BasicUnivariateSeries<Real> compute_beta_series(const BasicBivariateSeries<Real>& g, int n,
                                                Real* residual = nullptr) {
    using U = BasicUnivariateSeries<Real>;
    const Real xn = g.center()[0];
    const auto P = partial_z1(g);
    const int m = n + 3;
    if (P.order1() < m || P.order2() < m) {
        throw Error(ErrorCode::InvalidInput, "g series too short for the requested order");
    }

    // Leading behaviour: P ~ P20 v^2 + P11 v u + P02 u^2 with v = z1 - x_N, u = z2 - x_N.
    // One root of P20 t^2 + P11 t + P02 is t = 1 (the diagonal); keep the other.
    const Real qa = P.at(2, 0), qb = P.at(1, 1), qc = P.at(0, 2);
    const Real disc = qb * qb - Real(4) * qa * qc;
    if (qa == Real(0) || disc < Real(0)) {
        throw Error(ErrorCode::BranchAmbiguity, "no real non-diagonal branch of dg/dz1 = 0");
    }
    const Real sq = std::sqrt(disc);
    const Real t1 = (-qb + sq) / (Real(2) * qa);
    const Real t2 = (-qb - sq) / (Real(2) * qa);
    const Real b1 = std::abs(t1 - Real(1)) > std::abs(t2 - Real(1)) ? t1 : t2;
    const Real other = b1 == t1 ? t2 : t1;
    if (std::abs(other - Real(1)) > Real(1e-6) || std::abs(b1 - Real(1)) <= Real(1e-6)) {
        throw Error(ErrorCode::BranchAmbiguity, "cannot separate the diagonal root from beta's slope");
    }
    const Real J = Real(2) * qa * b1 + qb;

    U beta = U::zero(xn, m);
    beta[0] = xn;
    beta[1] = b1;
    const U id = U::variable(xn, m);
    // b_k enters the residual first at order k+1, through J b_k u^{k+1}.
    for (int k = 2; k <= n + 2; ++k) {
        const U r = substitute(P, beta, id);
        beta[k] -= r[k + 1] / J;
    }
    beta = beta.truncated(n + 2);
    if (residual) {
        const U r = substitute(P, beta, U::variable(xn, n + 2));
        *residual = r.max_abs();
    }
    return beta;
}

template <typename Real = double>
BasicExpansionBundle<Real> build_expansion(const Model& model, int n = kDefaultSeriesOrder) {
    using U = BasicUnivariateSeries<Real>;
    using B = BasicBivariateSeries<Real>;
    if (n < 1 || n > 16) throw Error(ErrorCode::InvalidInput, "series order must lie in [1, 16]");

    BasicExpansionBundle<Real> e;
    e.params = model.params();
    e.merton = model.merton();
    e.order = n;
    const Real p(e.params.p);
    const Real xn = BasicMertonPoint<Real>(e.params).x_n;

    e.g_series = compute_g_series<Real>(model, n, &e.g_residual, &e.g_sweeps);
    e.t_series = compute_t_series<Real>(model, n + 3);
    e.beta_series = compute_beta_series<Real>(e.g_series, n, &e.beta_residual);

    const B P = partial_z1(e.g_series);
    const B z1 = B::variable_z1(P.center(), P.order1(), P.order2());
    e.G_series = antiderivative_z1(P / z1);

    const U id = U::variable(xn, n + 2);
    const U E = substitute(e.G_series, id, id) - substitute(e.G_series, e.beta_series, id);
    e.lambda_series = Real(1) - exp(E);
    e.low_order_residual = detail::max_abs_from(e.lambda_series, 0, 2);

    std::vector<Real> c(e.lambda_series.coeffs().begin() + 3, e.lambda_series.coeffs().end());
    e.c_series = U(xn, std::move(c));
    const Real c0 = e.c_series[0];
    if (std::abs(c0) <= Real(1e-12) * e.scale()) {
        throw Error(ErrorCode::LeadingCoefficientZero, "leading coefficient of the cost map vanishes");
    }
    if (!(c0 < Real(0))) {
        // The real cube root would put x_lo above x_N for small positive costs.
        std::ostringstream os;
        os << "c0 = " << static_cast<double>(c0) << " > 0 admits no real branch with x_lo < x_N";
        throw Error(ErrorCode::BranchSelectionFailure, os.str());
    }
    e.F_series = pow(e.c_series / c0, Real(1) / Real(3)) * Real(std::cbrt(c0));

    std::vector<Real> om(static_cast<std::size_t>(n) + 1, Real(0));
    for (int k = 1; k <= n; ++k) om[static_cast<std::size_t>(k)] = e.F_series[k - 1];
    const U omega(xn, std::move(om));
    e.alpha_series = revert(omega);
    const U& A = e.alpha_series;
    if (!(A[1] < Real(0))) throw Error(ErrorCode::BranchSelectionFailure, "x_lo slope is not negative");

    e.x_hi_series = compose(e.beta_series, A);
    const U& Bw = e.x_hi_series;

    {
        const U lhs = (A - xn) * compose(e.F_series, A);
        U target = U::offset(Real(0), n);
        e.reversion_residual = (lhs - target).max_abs();

        const U lam = Real(1) - exp(substitute(e.G_series, A, A) - substitute(e.G_series, Bw, A));
        U w3 = U::zero(Real(0), n);
        if (n >= 3) w3[3] = Real(1);
        e.reconstruction_residual = (lam - w3).max_abs();
    }

    U w3 = U::zero(Real(0), n);
    if (n >= 3) w3[3] = Real(1);
    const U gAA = substitute(e.g_series, A, A);
    const U gBA = substitute(e.g_series, Bw, A);
    e.wedge_lo = A * (Real(1) - p) / (gAA * p);
    e.wedge_hi = Bw * (Real(1) - p) / (w3 * Bw * (Real(1) - p) + (Real(1) - w3) * gBA * p);
    return e;
}

/// sum_{i <= k} s_i lambda^{i/3} for a series in w = lambda^{1/3} about 0.
template <typename Real>
Real truncated_sum(const BasicUnivariateSeries<Real>& s, Real lambda, int k) {
    return s.evaluate_truncated(std::cbrt(lambda), k);
}

template <typename Real>
struct BasicValueSeries {
    Endowment endow;
    EndowmentCase region = EndowmentCase::On;  ///< relative to the Merton line
    BasicUnivariateSeries<Real> zeta;          ///< zeta_i in w
    std::optional<BasicUnivariateSeries<Real>> xhat_series;  ///< x~ about x_N ("on" only)
    Real xhat_residual = 0;

    Real evaluate(Real lambda, int k) const { return truncated_sum(zeta, lambda, k); }
};

using ValueSeries = BasicValueSeries<double>;

/// Case of an endowment relative to pi; "on" when the proportion equals pi to 1e-12.
inline EndowmentCase classify_endowment(const Endowment& e, double pi) {
    const double r = e.proportion();
    if (std::abs(r - pi) <= 1e-12 * std::max(1.0, std::abs(pi))) return EndowmentCase::On;
    return r < pi ? EndowmentCase::Below : EndowmentCase::Above;
}

/// zeta_i for one endowment. When `lambda` is given and no case is forced, an
/// endowment sitting on a wedge edge at that cost is rejected as ambiguous.
template <typename Real = double>
BasicValueSeries<Real> compute_value_series(const BasicExpansionBundle<Real>& b, const Endowment& endow,
                                            std::optional<EndowmentCase> forced = std::nullopt,
                                            std::optional<double> lambda = std::nullopt) {
    using U = BasicUnivariateSeries<Real>;
    using Bv = BasicBivariateSeries<Real>;
    check_solvent(endow, lambda.value_or(0.0));
    const int n = b.order;
    const Real p(b.params.p);
    const Real sgn(b.merton.sgn_p);
    const BasicMertonPoint<Real> pt(b.params);
    const Real xn = pt.x_n;
    const Real eta_b(endow.eta_b), eta_s(endow.eta_s), s0(endow.s0);
    const Real W = eta_b + s0 * eta_s;

    BasicValueSeries<Real> v;
    v.endow = endow;
    v.region = forced.value_or(classify_endowment(endow, b.merton.pi));
    if (!forced && lambda) {
        const double r = endow.proportion();
        const double lo = static_cast<double>(truncated_sum(b.wedge_lo, Real(*lambda), n));
        const double hi = static_cast<double>(truncated_sum(b.wedge_hi, Real(*lambda), n));
        if (std::abs(r - lo) <= 1e-12 || std::abs(r - hi) <= 1e-12) {
            std::ostringstream os;
            os << "proportion " << r << " sits on a wedge edge at lambda = " << *lambda;
            throw Error(ErrorCode::CaseBoundary, os.str());
        }
    }

    const U& A = b.alpha_series;
    U w3 = U::zero(Real(0), n);
    if (n >= 3) w3[3] = Real(1);

    switch (v.region) {
        case EndowmentCase::Below: {
            const U TA = compose(b.t_series, A);
            v.zeta = pow(TA * sgn, Real(1) - p) * (std::pow(W, p) / p);
            break;
        }
        case EndowmentCase::Above: {
            const U gBA = substitute(b.g_series, b.x_hi_series, A);
            const U bond = (Real(1) - w3) * (s0 * eta_s) + eta_b;
            v.zeta = pow(bond, p) * pow(gBA * sgn, Real(1) - p) / p;
            break;
        }
        case EndowmentCase::On: {
            // x~(z2) solves r~(x~(z2), z2) = 0 with
            //   r~(z1, z2) = (1 - (1-p) z1 / (p g~(z1, z2))) (eta_B + eta_S S0 e^{G(z2,z2) - G(z1,z2)}) - eta_B.
            const U id = U::variable(xn, n);
            const Bv& g = b.g_series;
            const Bv& G = b.G_series;
            const U Gdiag = substitute(G, id, id);
            auto r_of = [&](const U& X) {
                const U t = Real(1) - X * (Real(1) - p) / (substitute(g, X, id) * p);
                return t * (exp(Gdiag - substitute(G, X, id)) * (eta_s * s0) + eta_b) - eta_b;
            };
            const Real J = -(Real(1) - p) * W / (p * pt.y_n);
            U X = U::constant(xn, xn, n);
            for (int k = 1; k <= n; ++k) X[k] -= r_of(X)[k] / J;
            v.xhat_residual = detail::max_abs_from(r_of(X), 1, n);
            const U Xw = compose(X, A);
            const U gXA = substitute(g, Xw, A);
            const U e = exp(substitute(G, A, A) - substitute(G, Xw, A));
            v.zeta = pow(e * (s0 * eta_s) + eta_b, p) * pow(gXA * sgn, Real(1) - p) / p;
            v.xhat_series = X;
            break;
        }
    }
    return v;
}

}  // namespace mertontc
