#pragma once

// Truncated Taylor series in one and two variables.
//
// A univariate series of order n about `center` stores c_0..c_n of
//   s(z) = sum_k c_k (z - center)^k + O((z - center)^{n+1}).
// A bivariate series of orders (m1, m2) about (c1, c2) stores the full
// rectangle a_ij, 0 <= i <= m1, 0 <= j <= m2. Rectangular truncation is
// closed under products, so every arithmetic result is exact inside the
// rectangle of its operands' common orders.
//
// Composition never re-centers implicitly: the inner series' constant term
// must equal the outer center exactly as stored.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "mertontc/error.hpp"

namespace mertontc {

template <typename Real>
class BasicUnivariateSeries {
public:
    BasicUnivariateSeries() : center_(0), coeffs_(1, Real(0)) {}

    BasicUnivariateSeries(Real center, std::vector<Real> coeffs)
        : center_(center), coeffs_(std::move(coeffs)) {
        if (coeffs_.empty()) throw Error(ErrorCode::InvalidInput, "series needs at least c_0");
    }

    static BasicUnivariateSeries zero(Real center, int order) {
        return BasicUnivariateSeries(center, std::vector<Real>(checked(order) + 1, Real(0)));
    }

    static BasicUnivariateSeries constant(Real center, Real value, int order) {
        auto s = zero(center, order);
        s.coeffs_[0] = value;
        return s;
    }

    /// The identity map z -> z expanded about `center`: center + (z - center).
    static BasicUnivariateSeries variable(Real center, int order) {
        auto s = zero(center, order);
        s.coeffs_[0] = center;
        if (order >= 1) s.coeffs_[1] = Real(1);
        return s;
    }

    /// The offset z - center.
    static BasicUnivariateSeries offset(Real center, int order) {
        auto s = zero(center, order);
        if (order >= 1) s.coeffs_[1] = Real(1);
        return s;
    }

    Real center() const { return center_; }
    int order() const { return static_cast<int>(coeffs_.size()) - 1; }
    const std::vector<Real>& coeffs() const { return coeffs_; }
    Real operator[](int k) const { return coeffs_[static_cast<std::size_t>(k)]; }
    Real& operator[](int k) { return coeffs_[static_cast<std::size_t>(k)]; }

    /// Value of the truncated polynomial at z.
    Real evaluate(Real z) const { return evaluate_truncated(z, order()); }

    /// Value of the polynomial truncated after degree k.
    Real evaluate_truncated(Real z, int k) const {
        const Real t = z - center_;
        Real acc(0);
        for (int i = std::min(k, order()); i >= 0; --i) acc = acc * t + coeffs_[static_cast<std::size_t>(i)];
        return acc;
    }

    BasicUnivariateSeries truncated(int order) const {
        std::vector<Real> c(coeffs_.begin(), coeffs_.begin() + std::min(order, this->order()) + 1);
        return BasicUnivariateSeries(center_, std::move(c));
    }

    /// Zero-pads (never invents significance: padding is only for callers that
    /// know the higher coefficients vanish, e.g. placeholders in Newton sweeps).
    BasicUnivariateSeries padded(int order) const {
        auto c = coeffs_;
        c.resize(static_cast<std::size_t>(std::max(order, this->order())) + 1, Real(0));
        return BasicUnivariateSeries(center_, std::move(c));
    }

    BasicUnivariateSeries with_constant(Real c0) const {
        auto s = *this;
        s.coeffs_[0] = c0;
        return s;
    }

    BasicUnivariateSeries operator-() const {
        auto s = *this;
        for (auto& c : s.coeffs_) c = -c;
        return s;
    }

    BasicUnivariateSeries& operator+=(Real v) { coeffs_[0] += v; return *this; }
    BasicUnivariateSeries& operator-=(Real v) { coeffs_[0] -= v; return *this; }
    BasicUnivariateSeries& operator*=(Real v) { for (auto& c : coeffs_) c *= v; return *this; }
    BasicUnivariateSeries& operator/=(Real v) { for (auto& c : coeffs_) c /= v; return *this; }

    friend BasicUnivariateSeries operator+(BasicUnivariateSeries a, Real v) { return a += v; }
    friend BasicUnivariateSeries operator+(Real v, BasicUnivariateSeries a) { return a += v; }
    friend BasicUnivariateSeries operator-(BasicUnivariateSeries a, Real v) { return a -= v; }
    friend BasicUnivariateSeries operator-(Real v, const BasicUnivariateSeries& a) { return (-a) += v; }
    friend BasicUnivariateSeries operator*(BasicUnivariateSeries a, Real v) { return a *= v; }
    friend BasicUnivariateSeries operator*(Real v, BasicUnivariateSeries a) { return a *= v; }
    friend BasicUnivariateSeries operator/(BasicUnivariateSeries a, Real v) { return a /= v; }

    friend BasicUnivariateSeries operator+(const BasicUnivariateSeries& a, const BasicUnivariateSeries& b) {
        const int n = common_order(a, b);
        auto r = zero(a.center_, n);
        for (int k = 0; k <= n; ++k) r[k] = a[k] + b[k];
        return r;
    }

    friend BasicUnivariateSeries operator-(const BasicUnivariateSeries& a, const BasicUnivariateSeries& b) {
        const int n = common_order(a, b);
        auto r = zero(a.center_, n);
        for (int k = 0; k <= n; ++k) r[k] = a[k] - b[k];
        return r;
    }

    friend BasicUnivariateSeries operator*(const BasicUnivariateSeries& a, const BasicUnivariateSeries& b) {
        const int n = common_order(a, b);
        auto r = zero(a.center_, n);
        for (int k = 0; k <= n; ++k) {
            Real acc(0);
            for (int i = 0; i <= k; ++i) acc += a[i] * b[k - i];
            r[k] = acc;
        }
        return r;
    }

    friend BasicUnivariateSeries operator/(const BasicUnivariateSeries& a, const BasicUnivariateSeries& b) {
        const int n = common_order(a, b);
        if (b[0] == Real(0)) {
            throw Error(ErrorCode::DivisionByZeroConstantTerm, "divisor has zero constant term");
        }
        auto r = zero(a.center_, n);
        for (int k = 0; k <= n; ++k) {
            Real acc = a[k];
            for (int i = 0; i < k; ++i) acc -= r[i] * b[k - i];
            r[k] = acc / b[0];
        }
        return r;
    }

    friend BasicUnivariateSeries operator/(Real v, const BasicUnivariateSeries& b) {
        return constant(b.center_, v, b.order()) / b;
    }

    /// Max |c_k| over all stored coefficients.
    Real max_abs() const {
        Real m(0);
        for (const auto& c : coeffs_) m = std::max(m, Real(std::abs(c)));
        return m;
    }

private:
    static std::size_t checked(int order) {
        if (order < 0) throw Error(ErrorCode::InvalidInput, "negative truncation order");
        return static_cast<std::size_t>(order);
    }

    static int common_order(const BasicUnivariateSeries& a, const BasicUnivariateSeries& b) {
        if (a.center_ != b.center_) {
            std::ostringstream os;
            os << "centers differ (" << a.center_ << " vs " << b.center_ << ")";
            throw Error(ErrorCode::CenterMismatch, os.str());
        }
        return std::min(a.order(), b.order());
    }

    Real center_;
    std::vector<Real> coeffs_;
};

template <typename Real>
BasicUnivariateSeries<Real> exp(const BasicUnivariateSeries<Real>& a) {
    using std::exp;
    const int n = a.order();
    auto b = BasicUnivariateSeries<Real>::zero(a.center(), n);
    b[0] = exp(a[0]);
    for (int k = 1; k <= n; ++k) {
        Real acc(0);
        for (int j = 1; j <= k; ++j) acc += Real(j) * a[j] * b[k - j];
        b[k] = acc / Real(k);
    }
    return b;
}

template <typename Real>
BasicUnivariateSeries<Real> log(const BasicUnivariateSeries<Real>& a) {
    using std::log;
    if (!(a[0] > Real(0))) throw Error(ErrorCode::NonpositiveConstantTerm, "log needs a positive constant term");
    const int n = a.order();
    auto b = BasicUnivariateSeries<Real>::zero(a.center(), n);
    b[0] = log(a[0]);
    for (int k = 1; k <= n; ++k) {
        Real acc(0);
        for (int j = 1; j < k; ++j) acc += Real(j) * b[j] * a[k - j];
        b[k] = (a[k] - acc / Real(k)) / a[0];
    }
    return b;
}

/// a^r for a real exponent r; a's constant term must be positive.
template <typename Real>
BasicUnivariateSeries<Real> pow(const BasicUnivariateSeries<Real>& a, Real r) {
    using std::pow;
    if (!(a[0] > Real(0))) throw Error(ErrorCode::NonpositiveConstantTerm, "power needs a positive constant term");
    const int n = a.order();
    auto b = BasicUnivariateSeries<Real>::zero(a.center(), n);
    b[0] = pow(a[0], r);
    // k a_0 b_k = sum_{j=1}^k (r j - (k - j)) a_j b_{k-j}
    for (int k = 1; k <= n; ++k) {
        Real acc(0);
        for (int j = 1; j <= k; ++j) acc += (r * Real(j) - Real(k - j)) * a[j] * b[k - j];
        b[k] = acc / (Real(k) * a[0]);
    }
    return b;
}

/// outer(inner(w)); inner's constant term must equal outer's center.
/// The result lives about inner's center, to order min(outer, inner).
template <typename Real>
BasicUnivariateSeries<Real> compose(const BasicUnivariateSeries<Real>& outer,
                                    const BasicUnivariateSeries<Real>& inner) {
    if (inner[0] != outer.center()) {
        std::ostringstream os;
        os << "inner constant term " << inner[0] << " differs from outer center " << outer.center();
        throw Error(ErrorCode::CenterMismatch, os.str());
    }
    const int n = std::min(outer.order(), inner.order());
    const auto d = inner.truncated(n).with_constant(Real(0));
    auto r = BasicUnivariateSeries<Real>::constant(inner.center(), outer[n], n);
    for (int k = n - 1; k >= 0; --k) r = r * d + outer[k];
    return r;
}

/// Compositional inverse. For a about c with a(c) = 0 and a'(c) != 0, returns
/// b about 0 with b(0) = c and a(b(w)) = w through the order of a.
template <typename Real>
BasicUnivariateSeries<Real> revert(const BasicUnivariateSeries<Real>& a) {
    if (a.order() < 1 || a[0] != Real(0) || a[1] == Real(0)) {
        throw Error(ErrorCode::NotInvertible, "reversion needs a zero constant and a nonzero linear term");
    }
    const int n = a.order();
    auto b = BasicUnivariateSeries<Real>::zero(Real(0), n);
    b[0] = a.center();
    b[1] = Real(1) / a[1];
    // Each pass fixes one more coefficient: the order-k coefficient of a(b(w))
    // depends on b_k only through a_1 b_k.
    for (int k = 2; k <= n; ++k) {
        const auto r = compose(a, b.truncated(k));
        b[k] -= r[k] / a[1];
    }
    return b;
}

template <typename Real>
class BasicBivariateSeries {
public:
    using Univariate = BasicUnivariateSeries<Real>;

    BasicBivariateSeries() : BasicBivariateSeries({Real(0), Real(0)}, 0, 0) {}

    BasicBivariateSeries(std::array<Real, 2> center, int m1, int m2)
        : center_(center), m1_(m1), m2_(m2) {
        if (m1 < 0 || m2 < 0) throw Error(ErrorCode::InvalidInput, "negative truncation order");
        a_.assign(static_cast<std::size_t>((m1 + 1) * (m2 + 1)), Real(0));
    }

    static BasicBivariateSeries constant(std::array<Real, 2> center, Real v, int m1, int m2) {
        BasicBivariateSeries s(center, m1, m2);
        s.at(0, 0) = v;
        return s;
    }

    /// The coordinate function z1 = c1 + (z1 - c1).
    static BasicBivariateSeries variable_z1(std::array<Real, 2> center, int m1, int m2) {
        auto s = constant(center, center[0], m1, m2);
        if (m1 >= 1) s.at(1, 0) = Real(1);
        return s;
    }

    static BasicBivariateSeries variable_z2(std::array<Real, 2> center, int m1, int m2) {
        auto s = constant(center, center[1], m1, m2);
        if (m2 >= 1) s.at(0, 1) = Real(1);
        return s;
    }

    /// Lifts a series in z1 (about c1) to a bivariate independent of z2.
    static BasicBivariateSeries from_z1(const Univariate& u, Real c2, int m2) {
        BasicBivariateSeries s({u.center(), c2}, u.order(), m2);
        for (int i = 0; i <= u.order(); ++i) s.at(i, 0) = u[i];
        return s;
    }

    /// Lifts a series in z2 (about c2) to a bivariate independent of z1.
    static BasicBivariateSeries from_z2(const Univariate& u, Real c1, int m1) {
        BasicBivariateSeries s({c1, u.center()}, m1, u.order());
        for (int j = 0; j <= u.order(); ++j) s.at(0, j) = u[j];
        return s;
    }

    const std::array<Real, 2>& center() const { return center_; }
    int order1() const { return m1_; }
    int order2() const { return m2_; }

    Real& at(int i, int j) { return a_[index(i, j)]; }
    Real at(int i, int j) const { return a_[index(i, j)]; }
    Real operator()(int i, int j) const { return at(i, j); }

    Real evaluate(Real z1, Real z2) const {
        const Real t1 = z1 - center_[0];
        const Real t2 = z2 - center_[1];
        Real acc(0);
        for (int i = m1_; i >= 0; --i) {
            Real row(0);
            for (int j = m2_; j >= 0; --j) row = row * t2 + at(i, j);
            acc = acc * t1 + row;
        }
        return acc;
    }

    BasicBivariateSeries truncated(int m1, int m2) const {
        BasicBivariateSeries r(center_, std::min(m1, m1_), std::min(m2, m2_));
        for (int i = 0; i <= r.m1_; ++i)
            for (int j = 0; j <= r.m2_; ++j) r.at(i, j) = at(i, j);
        return r;
    }

    Real max_abs() const {
        Real m(0);
        for (const auto& c : a_) m = std::max(m, Real(std::abs(c)));
        return m;
    }

    BasicBivariateSeries operator-() const {
        auto s = *this;
        for (auto& c : s.a_) c = -c;
        return s;
    }

    BasicBivariateSeries& operator+=(Real v) { at(0, 0) += v; return *this; }
    BasicBivariateSeries& operator-=(Real v) { at(0, 0) -= v; return *this; }
    BasicBivariateSeries& operator*=(Real v) { for (auto& c : a_) c *= v; return *this; }
    BasicBivariateSeries& operator/=(Real v) { for (auto& c : a_) c /= v; return *this; }

    friend BasicBivariateSeries operator+(BasicBivariateSeries a, Real v) { return a += v; }
    friend BasicBivariateSeries operator+(Real v, BasicBivariateSeries a) { return a += v; }
    friend BasicBivariateSeries operator-(BasicBivariateSeries a, Real v) { return a -= v; }
    friend BasicBivariateSeries operator-(Real v, const BasicBivariateSeries& a) { return (-a) += v; }
    friend BasicBivariateSeries operator*(BasicBivariateSeries a, Real v) { return a *= v; }
    friend BasicBivariateSeries operator*(Real v, BasicBivariateSeries a) { return a *= v; }
    friend BasicBivariateSeries operator/(BasicBivariateSeries a, Real v) { return a /= v; }

    friend BasicBivariateSeries operator+(const BasicBivariateSeries& a, const BasicBivariateSeries& b) {
        auto r = common_shape(a, b);
        for (int i = 0; i <= r.m1_; ++i)
            for (int j = 0; j <= r.m2_; ++j) r.at(i, j) = a.at(i, j) + b.at(i, j);
        return r;
    }

    friend BasicBivariateSeries operator-(const BasicBivariateSeries& a, const BasicBivariateSeries& b) {
        auto r = common_shape(a, b);
        for (int i = 0; i <= r.m1_; ++i)
            for (int j = 0; j <= r.m2_; ++j) r.at(i, j) = a.at(i, j) - b.at(i, j);
        return r;
    }

    friend BasicBivariateSeries operator*(const BasicBivariateSeries& a, const BasicBivariateSeries& b) {
        auto r = common_shape(a, b);
        for (int i = 0; i <= r.m1_; ++i) {
            for (int j = 0; j <= r.m2_; ++j) {
                Real acc(0);
                for (int k = 0; k <= i; ++k)
                    for (int l = 0; l <= j; ++l) acc += a.at(k, l) * b.at(i - k, j - l);
                r.at(i, j) = acc;
            }
        }
        return r;
    }

    friend BasicBivariateSeries operator/(const BasicBivariateSeries& a, const BasicBivariateSeries& b) {
        auto r = common_shape(a, b);
        const Real b00 = b.at(0, 0);
        if (b00 == Real(0)) {
            throw Error(ErrorCode::DivisionByZeroConstantTerm, "bivariate divisor has zero constant term");
        }
        for (int i = 0; i <= r.m1_; ++i) {
            for (int j = 0; j <= r.m2_; ++j) {
                Real acc = a.at(i, j);
                for (int k = 0; k <= i; ++k) {
                    for (int l = 0; l <= j; ++l) {
                        if (k == i && l == j) continue;
                        acc -= r.at(k, l) * b.at(i - k, j - l);
                    }
                }
                r.at(i, j) = acc / b00;
            }
        }
        return r;
    }

    friend BasicBivariateSeries operator/(Real v, const BasicBivariateSeries& b) {
        return constant(b.center_, v, b.m1_, b.m2_) / b;
    }

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i * (m2_ + 1) + j);
    }

    static BasicBivariateSeries common_shape(const BasicBivariateSeries& a, const BasicBivariateSeries& b) {
        if (a.center_ != b.center_) throw Error(ErrorCode::CenterMismatch, "bivariate centers differ");
        return BasicBivariateSeries(a.center_, std::min(a.m1_, b.m1_), std::min(a.m2_, b.m2_));
    }

    std::array<Real, 2> center_;
    int m1_;
    int m2_;
    std::vector<Real> a_;
};

/// d/dz1; the z1 order drops by one.
template <typename Real>
BasicBivariateSeries<Real> partial_z1(const BasicBivariateSeries<Real>& a) {
    if (a.order1() < 1) throw Error(ErrorCode::InvalidInput, "cannot differentiate an order-0 series");
    BasicBivariateSeries<Real> r(a.center(), a.order1() - 1, a.order2());
    for (int i = 0; i < a.order1(); ++i)
        for (int j = 0; j <= a.order2(); ++j) r.at(i, j) = Real(i + 1) * a.at(i + 1, j);
    return r;
}

/// Antiderivative in z1 vanishing on z1 = c1 (every j-indexed constant is 0);
/// the z1 order grows by one.
template <typename Real>
BasicBivariateSeries<Real> antiderivative_z1(const BasicBivariateSeries<Real>& a) {
    BasicBivariateSeries<Real> r(a.center(), a.order1() + 1, a.order2());
    for (int i = 0; i <= a.order1(); ++i)
        for (int j = 0; j <= a.order2(); ++j) r.at(i + 1, j) = a.at(i, j) / Real(i + 1);
    return r;
}

/// a(z1(w), z2(w)) for two series in the same variable w. Their constant terms
/// must equal a's centers. Exact through order min(m1, m2, order(z1), order(z2)).
template <typename Real>
BasicUnivariateSeries<Real> substitute(const BasicBivariateSeries<Real>& a,
                                       const BasicUnivariateSeries<Real>& z1,
                                       const BasicUnivariateSeries<Real>& z2) {
    using U = BasicUnivariateSeries<Real>;
    if (z1.center() != z2.center()) throw Error(ErrorCode::CenterMismatch, "inner series centers differ");
    if (z1[0] != a.center()[0] || z2[0] != a.center()[1]) {
        std::ostringstream os;
        os << "inner constant terms (" << z1[0] << ", " << z2[0] << ") differ from centers ("
           << a.center()[0] << ", " << a.center()[1] << ")";
        throw Error(ErrorCode::CenterMismatch, os.str());
    }
    const int n = std::min({a.order1(), a.order2(), z1.order(), z2.order()});
    const U v = z1.truncated(n).with_constant(Real(0));
    const U u = z2.truncated(n).with_constant(Real(0));

    std::vector<U> upow;
    upow.reserve(static_cast<std::size_t>(n) + 1);
    upow.push_back(U::constant(z1.center(), Real(1), n));
    for (int j = 1; j <= n; ++j) upow.push_back(upow.back() * u);

    // Horner in v over rows, each row a polynomial in u.
    U acc = U::zero(z1.center(), n);
    for (int i = n; i >= 0; --i) {
        U row = U::zero(z1.center(), n);
        for (int j = 0; j <= n - i; ++j) row = row + upow[static_cast<std::size_t>(j)] * a.at(i, j);
        acc = acc * v + row;
    }
    return acc;
}

using UnivariateSeries = BasicUnivariateSeries<double>;
using BivariateSeries = BasicBivariateSeries<double>;

}  // namespace mertontc
