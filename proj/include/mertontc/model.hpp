#pragma once

// Market model for Merton's investment/consumption problem with proportional
// transaction costs and power utility U(c) = c^p / p.
//
// The free-boundary ODE is g'(x) = L(x, g(x)) with L a ratio of two quadratic
// polynomials in (x, z); T(x) is the "+sqrt" root in z of L's numerator.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "mertontc/error.hpp"

namespace mertontc {

inline constexpr double kDefaultLambdaCeiling = 0.2;

/// Model constants. lambda is the proportional cost charged on stock sales.
struct MarketParams {
    double mu = 0.0;      ///< stock drift, > 0
    double sigma = 0.0;   ///< stock volatility, > 0
    double delta = 0.0;   ///< impatience rate, > 0
    double p = 0.0;       ///< risk-aversion exponent in (-inf, 1) \ {0}
    double lambda = 0.0;  ///< proportional transaction cost in [0, ceiling)

    bool operator==(const MarketParams&) const = default;
};

/// Frictionless quantities derived from MarketParams.
struct MertonQuantities {
    double pi = 0.0;      ///< Merton proportion mu / (sigma^2 (1-p))
    double x_n = 0.0;     ///< abscissa of the frictionless point N
    double y_n = 0.0;     ///< ordinate of N, sign(y_n) == sgn_p
    double margin = 0.0;  ///< K = 2 sigma^2 delta (1-p) - p mu^2
    int sgn_p = 0;
    double q = 0.0;       ///< p / (1-p)
};

/// Initial holdings: eta_b bond units, eta_s shares at price s0.
struct Endowment {
    double eta_b = 0.0;
    double eta_s = 0.0;
    double s0 = 1.0;

    bool operator==(const Endowment&) const = default;

    /// Total frictionless wealth eta_b + s0 eta_s.
    double wealth() const { return eta_b + s0 * eta_s; }

    /// Fraction of frictionless wealth held in stock.
    double proportion() const { return s0 * eta_s / wealth(); }

    /// Liquidation value after paying the cost on any short position.
    double liquidation_value(double lambda) const {
        const double pos = std::max(eta_s, 0.0);
        const double neg = std::max(-eta_s, 0.0);
        return eta_b + pos * s0 - neg * (1.0 - lambda) * s0;
    }
};

/// Position of an endowment's stock proportion relative to the no-trade wedge
/// (numeric solver) or to the Merton line (series engine).
enum class EndowmentCase { Below, On, Above };

inline const char* to_string(EndowmentCase c) {
    switch (c) {
        case EndowmentCase::Below: return "below";
        case EndowmentCase::On: return "on";
        case EndowmentCase::Above: return "above";
    }
    return "unknown";
}

inline void check_solvent(const Endowment& e, double lambda) {
    if (!(e.s0 > 0.0) || !std::isfinite(e.eta_b) || !std::isfinite(e.eta_s)) {
        throw Error(ErrorCode::Insolvent, "endowment needs s0 > 0 and finite holdings");
    }
    if (!(e.liquidation_value(lambda) > 0.0) || !(e.wealth() > 0.0)) {
        std::ostringstream os;
        os << "endowment (eta_b=" << e.eta_b << ", eta_s=" << e.eta_s << ", s0=" << e.s0
           << ") is not solvent";
        throw Error(ErrorCode::Insolvent, os.str());
    }
}

inline int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

/// Checks ranges and the standing assumptions K > 0, pi != 1.
inline MertonQuantities validate_params(const MarketParams& m,
                                        double lambda_ceiling = kDefaultLambdaCeiling) {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::BadRange, what); };
    if (!std::isfinite(m.mu) || !(m.mu > 0.0)) bad("mu must be > 0");
    if (!std::isfinite(m.sigma) || !(m.sigma > 0.0)) bad("sigma must be > 0");
    if (!std::isfinite(m.delta) || !(m.delta > 0.0)) bad("delta must be > 0");
    if (!std::isfinite(m.p) || !(m.p < 1.0) || m.p == 0.0) bad("p must lie in (-inf,1) \\ {0}");
    if (!std::isfinite(m.lambda) || m.lambda < 0.0 || !(m.lambda < lambda_ceiling)) {
        std::ostringstream os;
        os << "lambda must lie in [0, " << lambda_ceiling << ")";
        bad(os.str());
    }

    MertonQuantities q;
    const double s2 = m.sigma * m.sigma;
    q.margin = 2.0 * s2 * m.delta * (1.0 - m.p) - m.p * m.mu * m.mu;
    if (!(q.margin > 0.0)) {
        std::ostringstream os;
        os << "well-posedness margin 2 sigma^2 delta (1-p) - p mu^2 = " << q.margin << " <= 0";
        throw Error(ErrorCode::IllPosed, os.str());
    }
    q.pi = m.mu / (s2 * (1.0 - m.p));
    if (std::abs(q.pi - 1.0) <= 1e-12) {
        throw Error(ErrorCode::UnitMerton, "Merton proportion equals 1");
    }
    q.sgn_p = sign_of(m.p);
    q.x_n = 2.0 * q.sgn_p * m.p * m.mu / q.margin;
    q.y_n = 2.0 * q.sgn_p * (1.0 - m.p) * (1.0 - m.p) * s2 / q.margin;
    q.q = m.p / (1.0 - m.p);
    return q;
}

/// x_N, y_N, K and pi recomputed in the requested precision (no validation).
template <typename Real>
struct BasicMertonPoint {
    Real x_n, y_n, margin, pi;

    explicit BasicMertonPoint(const MarketParams& m) {
        const Real p(m.p), mu(m.mu), sigma(m.sigma), delta(m.delta);
        const Real s = static_cast<Real>(sign_of(m.p));
        const Real s2 = sigma * sigma;
        margin = Real(2) * s2 * delta * (Real(1) - p) - p * mu * mu;
        pi = mu / (s2 * (Real(1) - p));
        x_n = Real(2) * s * p * mu / margin;
        y_n = Real(2) * s * (Real(1) - p) * (Real(1) - p) * s2 / margin;
    }
};

/// Monomial coefficients of a quadratic c_x x + c_xx x^2 + c_z z + c_xz x z + c_zz z^2
/// (plus a constant). Evaluates on any ring-like type so the series engine
/// shares the exact same field definition as the numeric solver.
template <typename Real = double>
struct BasicQuadratic {
    Real c0 = 0, cx = 0, cxx = 0, cz = 0, cxz = 0, czz = 0;

    Real operator()(Real x, Real z) const {
        return c0 + x * (cx + cxx * x) + z * (cz + cxz * x + czz * z);
    }

    template <typename X, typename Z>
    auto evaluate(const X& x, const Z& z) const {
        return x * cx + x * x * cxx + z * cz + x * z * cxz + z * z * czz + c0;
    }

    /// Largest monomial magnitude at (x, z); scale for cancellation estimates.
    Real magnitude(Real x, Real z) const {
        using std::abs;
        return std::max({abs(c0), abs(cx * x), abs(cxx * x * x), abs(cz * z), abs(cxz * x * z),
                         abs(czz * z * z)});
    }
};

using Quadratic = BasicQuadratic<double>;

/// L(x, z) = numerator / denominator.
template <typename Real = double>
struct BasicField {
    BasicQuadratic<Real> numerator;
    BasicQuadratic<Real> denominator;
};

using Field = BasicField<double>;

/// Coefficients of L, rounded once in the requested precision.
template <typename Real = double>
BasicField<Real> make_field(const MarketParams& m) {
    const Real s = static_cast<Real>(sign_of(m.p));
    const Real p(m.p), mu(m.mu), delta(m.delta), sigma(m.sigma);
    const Real s2 = sigma * sigma;
    const Real omp = Real(1) - p;
    BasicField<Real> f;
    // -s2 (1-p)^3 x^2 + 2p(1-p)(s + mu x) z - 2 delta p z^2
    f.numerator.cxx = -s2 * omp * omp * omp;
    f.numerator.cz = Real(2) * p * omp * s;
    f.numerator.cxz = Real(2) * p * omp * mu;
    f.numerator.czz = -Real(2) * delta * p;
    // (1-p) x (2s + 2 mu x + s2 (p^2-1) x)
    //   - (2 delta x + p(1-p)(2s + 2 mu x - s2 x)) z + 2 delta p z^2
    f.denominator.cx = Real(2) * s * omp;
    f.denominator.cxx = omp * (Real(2) * mu + s2 * (p * p - Real(1)));
    f.denominator.cz = -Real(2) * p * omp * s;
    f.denominator.cxz = -(Real(2) * delta + p * omp * (Real(2) * mu - s2));
    f.denominator.czz = Real(2) * delta * p;
    return f;
}

/// Radicand of T: p (p + 2 sgn(p) p mu x - K x^2), with K the well-posedness margin.
inline Quadratic make_t_radicand(const MarketParams& m) {
    const double s = static_cast<double>(sign_of(m.p));
    const double K = 2.0 * m.sigma * m.sigma * m.delta * (1.0 - m.p) - m.p * m.mu * m.mu;
    Quadratic r;
    r.c0 = m.p * m.p;
    r.cx = 2.0 * s * m.p * m.p * m.mu;
    r.cxx = -m.p * K;
    return r;
}

inline double eval_field(const Field& f, double x, double z) {
    const double den = f.denominator(x, z);
    if (den == 0.0 || std::abs(den) <= 1e-14 * std::max(1.0, f.denominator.magnitude(x, z))) {
        std::ostringstream os;
        os << "denominator of L vanishes at (" << x << ", " << z << ")";
        throw Error(ErrorCode::DenominatorZero, os.str());
    }
    return f.numerator(x, z) / den;
}

inline double eval_L(double x, double z, const MarketParams& m) {
    return eval_field(make_field(m), x, z);
}

inline double eval_T(double x, const MarketParams& m) {
    const double rad = make_t_radicand(m)(x, 0.0);
    if (rad < 0.0 || !std::isfinite(rad)) {
        std::ostringstream os;
        os << "T undefined at x = " << x << " (radicand " << rad << ")";
        throw Error(ErrorCode::OutOfDomain, os.str());
    }
    const double s = static_cast<double>(sign_of(m.p));
    return (m.p * (1.0 - m.p) * (s + m.mu * x) + (1.0 - m.p) * std::sqrt(rad)) /
           (2.0 * m.delta * m.p);
}

/// Validated parameters together with their derived frictionless quantities.
class Model {
public:
    explicit Model(const MarketParams& params, double lambda_ceiling = kDefaultLambdaCeiling)
        : params_(params), merton_(validate_params(params, lambda_ceiling)),
          field_(make_field(params)), lambda_ceiling_(lambda_ceiling) {}

    const MarketParams& params() const { return params_; }
    const MertonQuantities& merton() const { return merton_; }
    const Field& field() const { return field_; }
    double lambda() const { return params_.lambda; }

    /// Absolute scale used by residual tolerances: max(1, |y_N|, x_N).
    double scale() const { return std::max({1.0, std::abs(merton_.y_n), merton_.x_n}); }

    Model with_lambda(double lambda) const {
        MarketParams p = params_;
        p.lambda = lambda;
        return Model(p, lambda_ceiling_);
    }

    double L(double x, double z) const { return eval_field(field_, x, z); }
    double T(double x) const { return eval_T(x, params_); }

private:
    MarketParams params_;
    MertonQuantities merton_;
    Field field_;
    double lambda_ceiling_;
};

}  // namespace mertontc
