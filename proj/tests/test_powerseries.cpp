#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "mertontc/powerseries.hpp"

using namespace mertontc;
using U = UnivariateSeries;
using B = BivariateSeries;

namespace {

U poly(std::vector<double> c, double center = 0.0) { return U(center, std::move(c)); }

U random_series(std::mt19937_64& rng, int n, double c0 = 0.0, double center = 0.0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> c(static_cast<std::size_t>(n) + 1);
    for (auto& v : c) v = u(rng);
    c[0] = c0;
    return U(center, c);
}

B random_bivariate(std::mt19937_64& rng, int m1, int m2, std::array<double, 2> center = {0.0, 0.0}) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    B b(center, m1, m2);
    for (int i = 0; i <= m1; ++i)
        for (int j = 0; j <= m2; ++j) b.at(i, j) = u(rng);
    return b;
}

void expect_coeffs(const U& s, const std::vector<double>& want, double tol) {
    ASSERT_GE(s.order() + 1, static_cast<int>(want.size()));
    for (std::size_t k = 0; k < want.size(); ++k)
        EXPECT_NEAR(s[static_cast<int>(k)], want[k], tol) << "coefficient " << k;
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidInput;
}

}  // namespace

TEST(Univariate, RingExamples) {
    const U a = poly({1, 1, 0, 0});
    const U b = poly({1, -1, 0, 0});
    expect_coeffs(a * b, {1, 0, -1, 0}, 0.0);
    expect_coeffs(U::constant(0, 1, 6) / b, {1, 1, 1, 1}, 0.0);
    expect_coeffs(U::constant(0, 1, 3) / poly({1, -1, 0, 0, 0, 0, 0}), {1, 1, 1, 1}, 0.0);
    EXPECT_EQ((a - a).max_abs(), 0.0);
}

TEST(Univariate, OrderIsTheCommonTruncation) {
    const U a = poly({1, 2, 3, 4, 5});
    const U b = poly({1, 1});
    EXPECT_EQ((a * b).order(), 1);
    EXPECT_EQ((a + b).order(), 1);
}

TEST(Univariate, Errors) {
    EXPECT_EQ(code_of([] { return poly({1, 1}, 0.0) + poly({1, 1}, 1.0); }), ErrorCode::CenterMismatch);
    EXPECT_EQ(code_of([] { return poly({1, 1}) / poly({0, 1}); }), ErrorCode::DivisionByZeroConstantTerm);
    EXPECT_EQ(code_of([] { return log(poly({-1, 1})); }), ErrorCode::NonpositiveConstantTerm);
    EXPECT_EQ(code_of([] { return pow(poly({0, 1}), 0.5); }), ErrorCode::NonpositiveConstantTerm);
    EXPECT_EQ(code_of([] { return revert(poly({1, 1, 0})); }), ErrorCode::NotInvertible);
    EXPECT_EQ(code_of([] { return revert(poly({0, 0, 1})); }), ErrorCode::NotInvertible);
    EXPECT_EQ(code_of([] { return compose(poly({1, 1}, 2.0), poly({1, 1})); }), ErrorCode::CenterMismatch);
}

TEST(Univariate, ExpOfZeroIsOne) {
    expect_coeffs(exp(U::zero(0, 5)), {1, 0, 0, 0, 0, 0}, 0.0);
}

TEST(Univariate, PowerBinomial) {
    // (1 + w)^{1/3} = 1 + w/3 - w^2/9 + 5w^3/81 - 10w^4/243
    expect_coeffs(pow(poly({1, 1, 0, 0, 0}), 1.0 / 3.0), {1, 1.0 / 3, -1.0 / 9, 5.0 / 81, -10.0 / 243}, 1e-15);
}

TEST(Univariate, ComposeExamples) {
    const U inner = poly({0, 1, 1, 0, 0});
    expect_coeffs(compose(exp(U::offset(0, 4)), inner), {1, 1, 1.5, 7.0 / 6, 25.0 / 24}, 1e-14);

    std::mt19937_64 rng(3);
    const U a = random_series(rng, 6, 0.3, 2.0);
    const U id_about_a = U::variable(2.0, 6);
    const U r = compose(a, id_about_a);
    for (int k = 0; k <= 6; ++k) EXPECT_NEAR(r[k], a[k], 1e-15);
    const U w = random_series(rng, 6, 0.0, 0.0);
    const U ident = U::offset(0.0, 6);
    const U r2 = compose(ident, w);
    for (int k = 0; k <= 6; ++k) EXPECT_NEAR(r2[k], w[k], 1e-15);
}

TEST(Univariate, RevertExamples) {
    expect_coeffs(revert(U::offset(0, 5)), {0, 1, 0, 0, 0, 0}, 0.0);
    expect_coeffs(revert(poly({0, 2, 0, 0})), {0, 0.5, 0, 0}, 0.0);
    expect_coeffs(revert(poly({0, 1, 1, 0, 0, 0})), {0, 1, -1, 2, -5, 14}, 1e-13);
}

TEST(Univariate, RevertKeepsCenterAsConstant) {
    const U a(3.0, {0, -2, 0.5, 0.1});
    const U b = revert(a);
    EXPECT_EQ(b.center(), 0.0);
    EXPECT_EQ(b[0], 3.0);
}

TEST(Univariate, EvaluateAndTruncate) {
    const U a(1.0, {1, 2, 3});
    EXPECT_DOUBLE_EQ(a.evaluate(1.5), 1 + 2 * 0.5 + 3 * 0.25);
    EXPECT_DOUBLE_EQ(a.evaluate_truncated(1.5, 1), 2.0);
    EXPECT_EQ(a.truncated(1).order(), 1);
    EXPECT_EQ(a.padded(4)[4], 0.0);
}

TEST(UnivariateProperty, RingLaws) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 50; ++t) {
        const U a = random_series(rng, 8, 0.5), b = random_series(rng, 8, -0.2), c = random_series(rng, 8, 1.1);
        EXPECT_LT((a * b - b * a).max_abs(), 1e-13);
        EXPECT_LT(((a * b) * c - a * (b * c)).max_abs(), 1e-13);
        EXPECT_LT((a * (b + c) - (a * b + a * c)).max_abs(), 1e-13);
        EXPECT_LT(((a + b) + c - (a + (b + c))).max_abs(), 1e-13);
    }
}

TEST(UnivariateProperty, DivisionInvertsMultiplication) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 50; ++t) {
        const U a = random_series(rng, 8, 0.5), b = random_series(rng, 8, 1.5);
        EXPECT_LT(((a * b) / b - a).max_abs(), 1e-12);
    }
}

TEST(UnivariateProperty, LogExpInverse) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 50; ++t) {
        const U a = random_series(rng, 8, std::uniform_real_distribution<double>(-1, 1)(rng));
        EXPECT_LT((log(exp(a)) - a).max_abs(), 1e-12);
    }
}

TEST(UnivariateProperty, CubeAndCubeRoot) {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 50; ++t) {
        const U a = random_series(rng, 8, 1.0 + std::uniform_real_distribution<double>(0, 1)(rng));
        const U back = pow(pow(a, 3.0), 1.0 / 3.0);
        EXPECT_LT((back - a).max_abs(), 1e-10 * std::max(1.0, a.max_abs()));
        EXPECT_LT((a * a * a - pow(a, 3.0)).max_abs(), 1e-12 * std::max(1.0, pow(a, 3.0).max_abs()));
    }
}

TEST(UnivariateProperty, RevertComposeRoundTrip) {
    std::mt19937_64 rng(15);
    for (int t = 0; t < 50; ++t) {
        // Linear term bounded away from zero keeps the inverse well scaled.
        std::vector<double> c = random_series(rng, 8, 0.0).coeffs();
        c[1] = (c[1] < 0 ? -1.0 : 1.0) * (1.0 + std::abs(c[1]));
        const U a(1.7, c);
        const U b = revert(a);
        const U round = compose(a, b);
        const double scale = std::max(1.0, a.max_abs());
        EXPECT_NEAR(round[1], 1.0, 1e-10 * scale);
        for (int k : {0, 2, 3, 4, 5, 6, 7, 8}) EXPECT_NEAR(round[k], 0.0, 1e-10 * scale) << k;
    }
}

TEST(UnivariateProperty, TruncationBookkeeping) {
    // Recomputing from higher-order inputs must agree on every reported order.
    std::mt19937_64 rng(16);
    for (int t = 0; t < 20; ++t) {
        const U hi_a = random_series(rng, 10, 1.2), hi_b = random_series(rng, 10, 0.7);
        const U lo_a = hi_a.truncated(5), lo_b = hi_b.truncated(5);
        for (const auto& [lo, hi] : {std::pair{lo_a * lo_b, hi_a * hi_b}, std::pair{lo_a / lo_b, hi_a / hi_b},
                                     std::pair{exp(lo_a), exp(hi_a)}, std::pair{pow(lo_a, 0.3), pow(hi_a, 0.3)}}) {
            ASSERT_EQ(lo.order(), 5);
            for (int k = 0; k <= 5; ++k) EXPECT_NEAR(lo[k], hi[k], 1e-12 * std::max(1.0, std::abs(hi[k])));
        }
    }
}

TEST(Bivariate, PartialThenAntiderivative) {
    std::mt19937_64 rng(21);
    const B a = random_bivariate(rng, 6, 5, {2.0, 2.0});
    const B r = antiderivative_z1(partial_z1(a));
    for (int i = 0; i <= 6; ++i)
        for (int j = 0; j <= 5; ++j) EXPECT_NEAR(r.at(i, j), i == 0 ? 0.0 : a.at(i, j), 1e-15);
}

TEST(Bivariate, ReciprocalOfZ1AboutCenter) {
    const double xn = 2.5;
    const B z1 = B::variable_z1({xn, xn}, 6, 3);
    const B inv = B::constant({xn, xn}, 1.0, 6, 3) / z1;
    for (int i = 0; i <= 6; ++i) {
        EXPECT_NEAR(inv.at(i, 0), std::pow(-1.0, i) / std::pow(xn, i + 1), 1e-15);
        for (int j = 1; j <= 3; ++j) EXPECT_EQ(inv.at(i, j), 0.0);
    }
}

TEST(BivariateProperty, RingLaws) {
    std::mt19937_64 rng(22);
    for (int t = 0; t < 20; ++t) {
        const B a = random_bivariate(rng, 5, 4), b = random_bivariate(rng, 5, 4), c = random_bivariate(rng, 5, 4);
        EXPECT_LT((a * b - b * a).max_abs(), 1e-13);
        EXPECT_LT(((a * b) * c - a * (b * c)).max_abs(), 1e-13);
        EXPECT_LT((a * (b + c) - (a * b + a * c)).max_abs(), 1e-13);
    }
}

TEST(BivariateProperty, DivisionInvertsMultiplication) {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 20; ++t) {
        const B a = random_bivariate(rng, 5, 4);
        B b = random_bivariate(rng, 5, 4);
        b.at(0, 0) = 2.0;
        EXPECT_LT(((a * b) / b - a).max_abs(), 1e-12);
    }
}

TEST(Bivariate, DivisionByZeroConstant) {
    const B a = B::constant({0, 0}, 1.0, 2, 2);
    const B z = B::variable_z1({0, 0}, 2, 2);
    EXPECT_EQ(code_of([&] { return a / z; }), ErrorCode::DivisionByZeroConstantTerm);
}

TEST(Substitute, Diagonal) {
    std::mt19937_64 rng(24);
    const double c = 1.5;
    const B a = random_bivariate(rng, 6, 6, {c, c});
    const U id = U::variable(c, 6);
    const U d = substitute(a, id, id);
    // Coefficient k of the diagonal collects a_ij with i + j = k.
    for (int k = 0; k <= 6; ++k) {
        double s = 0.0;
        for (int i = 0; i <= k; ++i) s += a.at(i, k - i);
        EXPECT_NEAR(d[k], s, 1e-14);
    }
}

TEST(Substitute, PureZ1DegeneratesToCompose) {
    std::mt19937_64 rng(25);
    const U prof = random_series(rng, 6, 0.4, 3.0);
    const B a = B::from_z1(prof, 1.0, 6);
    const U z1 = random_series(rng, 6, 3.0, 0.0);
    const U z2 = random_series(rng, 6, 1.0, 0.0);
    const U got = substitute(a, z1, z2);
    const U want = compose(prof, z1);
    for (int k = 0; k <= 6; ++k) EXPECT_NEAR(got[k], want[k], 1e-13);
}

TEST(Substitute, Monomial) {
    const double xn = 4.0;
    const B a = B::variable_z1({xn, xn}, 4, 4) * B::variable_z2({xn, xn}, 4, 4) -
                B::variable_z1({xn, xn}, 4, 4) * xn - B::variable_z2({xn, xn}, 4, 4) * xn + xn * xn;
    U w2 = U::zero(0, 4);
    w2[0] = xn;
    w2[2] = 1.0;
    const U r = substitute(a, U::variable(0, 4) + xn, w2);
    expect_coeffs(r, {0, 0, 0, 1, 0}, 1e-13);
}

TEST(Substitute, CenterChecks) {
    const B a = B::constant({1.0, 2.0}, 1.0, 2, 2);
    EXPECT_EQ(code_of([&] { return substitute(a, U::constant(0, 1.0, 2), U::constant(0, 1.0, 2)); }),
              ErrorCode::CenterMismatch);
    EXPECT_EQ(code_of([&] { return substitute(a, U::constant(0, 1.0, 2), U::constant(1, 2.0, 2)); }),
              ErrorCode::CenterMismatch);
}

TEST(Univariate, LongDoubleScalar) {
    using UL = BasicUnivariateSeries<long double>;
    const UL a(0.0L, {0.0L, 1.0L, 1.0L, 0.0L, 0.0L, 0.0L});
    const UL b = revert(a);
    EXPECT_EQ(b[5], 14.0L);
}
