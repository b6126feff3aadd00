#include <gtest/gtest.h>

#include "mertontc/model.hpp"
#include "test_support.hpp"

using namespace mertontc;
using mertontc::testing::rel_err;
using mertontc::testing::set_a;
using mertontc::testing::set_b;

namespace {

ErrorCode code_of(const MarketParams& m) {
    try {
        validate_params(m);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidInput;  // sentinel: no error
}

}  // namespace

TEST(Model, DerivedQuantitiesSetA) {
    const auto q = validate_params(set_a(0.01));
    EXPECT_NEAR(q.pi, 1.25, 1e-15);
    EXPECT_NEAR(q.margin, 0.011, 1e-16);
    EXPECT_NEAR(q.x_n, 0.1 / 0.011, 1e-12);
    EXPECT_NEAR(q.y_n, 0.08 / 0.011, 1e-12);
    EXPECT_EQ(q.sgn_p, 1);
    EXPECT_DOUBLE_EQ(q.q, 1.0);
}

TEST(Model, DerivedQuantitiesSetB) {
    const auto q = validate_params(set_b(0.001));
    EXPECT_NEAR(q.pi, 0.64, 1e-15);
    EXPECT_NEAR(q.margin, 0.0314, 1e-16);
    EXPECT_NEAR(q.x_n, 5.0955, 1e-4);
    EXPECT_NEAR(q.y_n, -15.9236, 1e-4);
    EXPECT_EQ(q.sgn_p, -1);
    EXPECT_DOUBLE_EQ(q.q, -0.5);
}

TEST(Model, RejectsIllPosedMargin) {
    EXPECT_EQ(code_of({0.2, 0.2, 0.05, 0.5, 0.0}), ErrorCode::IllPosed);
}

TEST(Model, RejectsUnitMertonProportion) {
    // mu = sigma^2 (1-p) puts pi at exactly 1.
    EXPECT_EQ(code_of({0.08, 0.4, 0.1, 0.5, 0.0}), ErrorCode::UnitMerton);
}

TEST(Model, RejectsOutOfRangeInputs) {
    EXPECT_EQ(code_of({0.0, 0.4, 0.1, 0.5, 0.0}), ErrorCode::BadRange);
    EXPECT_EQ(code_of({0.1, -0.4, 0.1, 0.5, 0.0}), ErrorCode::BadRange);
    EXPECT_EQ(code_of({0.1, 0.4, 0.0, 0.5, 0.0}), ErrorCode::BadRange);
    EXPECT_EQ(code_of({0.1, 0.4, 0.1, 0.0, 0.0}), ErrorCode::BadRange);
    EXPECT_EQ(code_of({0.1, 0.4, 0.1, 1.0, 0.0}), ErrorCode::BadRange);
    EXPECT_EQ(code_of({0.1, 0.4, 0.1, 0.5, -1e-3}), ErrorCode::BadRange);
    EXPECT_EQ(code_of({0.1, 0.4, 0.1, 0.5, 0.2}), ErrorCode::BadRange);
    EXPECT_EQ(code_of({std::nan(""), 0.4, 0.1, 0.5, 0.0}), ErrorCode::BadRange);
    EXPECT_NO_THROW(validate_params({0.1, 0.4, 0.1, 0.5, 0.3}, 0.5));
}

TEST(Model, FieldVanishesAtMertonPoint) {
    for (const auto& m : {set_a(), set_b()}) {
        const auto q = validate_params(m);
        EXPECT_LT(std::abs(eval_L(q.x_n, q.y_n, m)), 1e-12 * (1.0 + std::abs(q.y_n)));
    }
}

TEST(Model, TPassesThroughMertonPoint) {
    for (const auto& m : {set_a(), set_b()}) {
        const auto q = validate_params(m);
        EXPECT_LT(rel_err(eval_T(q.x_n, m), q.y_n), 1e-12);
    }
}

TEST(Model, TAtOrigin) {
    EXPECT_NEAR(eval_T(0.0, set_a()), 5.0, 1e-13);
    const auto b = set_b();
    EXPECT_NEAR(eval_T(0.0, b), (1.0 - b.p) * -1.0 / b.delta, 1e-12);
}

TEST(Model, TOutsideDomain) {
    const auto m = set_a();
    try {
        eval_T(1e3, m);
        FAIL() << "expected OutOfDomain";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::OutOfDomain);
    }
}

TEST(Model, FieldIgnoresLambda) {
    const auto a0 = set_a(0.0), a1 = set_a(0.01);
    for (double x : {8.0, 9.0, 9.5})
        for (double z : {6.0, 7.0, 7.5}) EXPECT_EQ(eval_L(x, z, a0), eval_L(x, z, a1));
}

TEST(Model, DenominatorZeroIsReported) {
    // The denominator has no constant term, so it vanishes at the origin.
    try {
        eval_L(0.0, 0.0, set_a());
        FAIL() << "expected DenominatorZero";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DenominatorZero);
    }
}

TEST(Model, TIsARootOfTheNumerator) {
    for (const auto& m : {set_a(), set_b()}) {
        const auto q = validate_params(m);
        const Field f = make_field(m);
        for (int i = 0; i <= 40; ++i) {
            const double x = q.x_n * (0.9 + 0.2 * i / 40.0);
            double t;
            try {
                t = eval_T(x, m);
            } catch (const Error&) {
                continue;
            }
            EXPECT_LT(std::abs(f.numerator(x, t)), 1e-10 * f.numerator.magnitude(x, t)) << "x = " << x;
        }
    }
}

TEST(ModelProperty, RandomParameterSets) {
    mertontc::testing::ParamSampler s(20240601);
    for (int i = 0; i < 200; ++i) {
        const auto m = s.next();
        const auto q = validate_params(m);
        EXPECT_GT(q.x_n, 0.0);
        EXPECT_EQ(sign_of(q.y_n), q.sgn_p);
        EXPECT_NE(q.q * q.y_n, 0.0);
        EXPECT_LT(std::abs(eval_L(q.x_n, q.y_n, m)), 1e-12 * (1.0 + std::abs(q.y_n)));
        EXPECT_LT(rel_err(eval_T(q.x_n, m), q.y_n), 1e-12);
    }
}

TEST(ModelProperty, RadicandAtMertonPointIsPSquared) {
    mertontc::testing::ParamSampler s(7);
    for (int i = 0; i < 50; ++i) {
        const auto m = s.next();
        const auto q = validate_params(m);
        EXPECT_LT(rel_err(make_t_radicand(m)(q.x_n, 0.0), m.p * m.p), 1e-12);
    }
}

TEST(Model, ExtendedPrecisionPointAgrees) {
    for (const auto& m : {set_a(), set_b()}) {
        const auto q = validate_params(m);
        const BasicMertonPoint<long double> pt(m);
        EXPECT_LT(rel_err(static_cast<double>(pt.x_n), q.x_n), 1e-15);
        EXPECT_LT(rel_err(static_cast<double>(pt.y_n), q.y_n), 1e-15);
        const auto f = make_field<long double>(m);
        EXPECT_LT(std::abs(static_cast<double>(f.numerator(pt.x_n, pt.y_n))), 1e-17);
    }
}

TEST(Model, EndowmentHelpers) {
    const Endowment e{1.0, 2.0, 1.5};
    EXPECT_DOUBLE_EQ(e.wealth(), 4.0);
    EXPECT_DOUBLE_EQ(e.proportion(), 0.75);
    const Endowment s{3.0, -1.0, 1.0};
    EXPECT_DOUBLE_EQ(s.liquidation_value(0.1), 3.0 - 0.9);
    EXPECT_NO_THROW(check_solvent(e, 0.01));
    EXPECT_THROW(check_solvent({-1.0, 0.5, 1.0}, 0.0), Error);
    EXPECT_THROW(check_solvent({1.0, 1.0, 0.0}, 0.0), Error);
}

TEST(Model, ModelWithLambdaKeepsMarket) {
    const Model m(set_a());
    const Model m2 = m.with_lambda(1e-3);
    EXPECT_EQ(m2.lambda(), 1e-3);
    EXPECT_EQ(m2.merton().x_n, m.merton().x_n);
    EXPECT_DOUBLE_EQ(m.scale(), m.merton().x_n);
}
