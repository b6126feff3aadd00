#include <gtest/gtest.h>

#include <functional>

#include "mertontc/hjbcheck.hpp"
#include "test_support.hpp"

using namespace mertontc;
using mertontc::testing::endowment_at;
using mertontc::testing::set_a;
using mertontc::testing::set_b;

namespace {

FreeBoundarySolution solve(const MarketParams& m) { return solve_free_boundary(Model(m)); }

ValidationReport synthetic(std::function<double(double)> diff) {
    ValidationReport rep;
    rep.order = 1;
    for (double lam : default_lambda_grid()) {
        ValidationRow r;
        r.lambda = lam;
        r.x_lo = r.x_hi = r.pi_lo = r.pi_hi = r.u = 1.0;
        for (const auto& q : report_quantities()) {
            r.pred[q] = {1.0 - diff(lam)};
            r.diff[q] = {diff(lam)};
        }
        rep.rows.push_back(r);
    }
    return rep;
}

void expect_same(double a, double b) {
    if (std::isnan(a)) {
        EXPECT_TRUE(std::isnan(b));
    } else {
        EXPECT_EQ(a, b);
    }
}

void expect_same_report(const ValidationReport& a, const ValidationReport& b) {
    ASSERT_EQ(a.order, b.order);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const auto &x = a.rows[i], &y = b.rows[i];
        expect_same(x.lambda, y.lambda);
        for (const auto& q : report_quantities()) {
            expect_same(x.numeric(q), y.numeric(q));
            for (int k = 0; k < a.order; ++k) {
                expect_same(x.pred.at(q)[k], y.pred.at(q)[k]);
                expect_same(x.diff.at(q)[k], y.diff.at(q)[k]);
            }
        }
        expect_same(x.hjb_max_residual, y.hjb_max_residual);
        expect_same(x.h_min_abs, y.h_min_abs);
        expect_same(x.f_err_lo, y.f_err_lo);
        expect_same(x.f_err_hi, y.f_err_hi);
        EXPECT_EQ(x.h_sign, y.h_sign);
        EXPECT_EQ(x.status, y.status);
    }
}

}  // namespace

TEST(Hjb, ResidualVanishesAlongSolvedStrip) {
    for (const auto& m : {set_a(1e-3), set_b(1e-3), set_a(1e-5), set_b(1e-2)}) {
        const auto sol = solve(m);
        EXPECT_LT(hjb_max_residual(sol), 1e-8 * sol.model.scale());
    }
}

TEST(Hjb, EndpointsReduceToDriftTerms) {
    const auto sol = solve(set_a(1e-3));
    for (double x : {sol.x_lo, sol.x_hi}) {
        const double g = eval_leg(sol.leg, x).g;
        // With g' = 0 the minimizing Sigma vanishes and the diffusion term drops out.
        EXPECT_LT(std::abs(hjb_bracket(sol.params(), x, g, 0.0)), 1e-9 * sol.model.scale());
    }
}

TEST(Hjb, PerturbationIsDetected) {
    const auto sol = solve(set_a(1e-3));
    for (int i = 1; i < 10; ++i) {
        const double x = sol.x_lo + (sol.x_hi - sol.x_lo) * i / 10.0;
        const auto pt = eval_leg(sol.leg, x);
        const double base = std::abs(hjb_bracket(sol.params(), x, pt.g, leg_interpolant_slope(sol.leg, x)));
        const double moved = std::abs(hjb_bracket(sol.params(), x, pt.g + 1e-4, leg_interpolant_slope(sol.leg, x)));
        EXPECT_GT(moved - base, 1e-7);
    }
}

TEST(Hjb, HZeroIsReported) {
    try {
        hjb_bracket(set_a(), 1.0, 0.0, 0.0);
        FAIL() << "expected HZero";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::HZero);
    }
}

TEST(HProfile, SingleSignedWithMargin) {
    for (const auto& m : {set_a(1e-3), set_b(1e-3), set_a(1e-6), set_b(1e-6)}) {
        const auto sol = solve(m);
        const auto& q = sol.model.merton();
        const auto hp = h_profile(sol);
        EXPECT_EQ(hp.sign, 1);
        EXPECT_EQ(hp.sign, sign_of(q.q * q.y_n));
        EXPECT_GT(hp.min_abs, 0.1 * std::abs(q.q * q.y_n));
    }
}

TEST(HProfile, FrictionlessLimit) {
    const auto sol = solve(set_b(1e-10));
    const auto& q = sol.model.merton();
    EXPECT_NEAR(h_profile(sol).min_abs, q.q * q.y_n, 1e-3 * std::abs(q.q * q.y_n));
}

TEST(Instance, AllInvariantsHold) {
    for (const auto& m : {set_a(1e-4), set_b(1e-4)}) {
        const auto sol = solve(m);
        for (double r : {0.5, 1.0, 1.5}) {
            const auto chk = check_instance(sol, endowment_at(r * sol.model.merton().pi));
            EXPECT_TRUE(chk.violations(sol.model).empty());
        }
    }
}

TEST(Slope, SyntheticPowers) {
    EXPECT_NEAR(convergence_slope(synthetic([](double l) { return std::pow(l, 2.0 / 3.0); }), "pi_lo", 1), 2.0 / 3.0,
                1e-6);
    EXPECT_NEAR(convergence_slope(synthetic([](double l) { return 3.7 * l; }), "u", 1), 1.0, 1e-9);
}

TEST(Slope, FloatingPointFloorIsDegenerate) {
    try {
        convergence_slope(synthetic([](double) { return 1e-17; }), "x_lo", 1);
        FAIL() << "expected DegenerateFit";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateFit);
    }
}

TEST(CrossValidate, LeadingOrderSlopes) {
    const auto rep = cross_validate(set_b(), {1e-6, 3.16e-6, 1e-5, 3.16e-5, 1e-4, 3.16e-4, 1e-3}, 4);
    ASSERT_TRUE(rep.all_ok());
    for (std::size_t i = 1; i < rep.rows.size(); ++i) EXPECT_LT(rep.rows[i - 1].lambda, rep.rows[i].lambda);
    EXPECT_NEAR(convergence_slope(rep, "pi_lo", 1), 2.0 / 3.0, 0.1);
    EXPECT_NEAR(convergence_slope(rep, "pi_hi", 1), 2.0 / 3.0, 0.1);
    EXPECT_NEAR(convergence_slope(rep, "x_lo", 1), 2.0 / 3.0, 0.1);
    EXPECT_NEAR(convergence_slope(rep, "u", 1), 2.0 / 3.0, 0.1);
    EXPECT_NEAR(convergence_slope(rep, "x_hi", 4), 5.0 / 3.0, 0.25);
    EXPECT_NEAR(convergence_slope(rep, "pi_hi", 4), 5.0 / 3.0, 0.25);
}

TEST(CrossValidate, ErrorRowsAreMarked) {
    const auto rep = cross_validate(set_a(), {1e-4, 0.15}, 2);
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_EQ(rep.rows[0].status, "ok");
    EXPECT_EQ(rep.rows[1].status, "BracketFailure");
    EXPECT_FALSE(rep.all_ok());
    EXPECT_TRUE(std::isnan(rep.rows[1].x_lo));
}

TEST(Report, CsvSchema) {
    const auto rep = cross_validate(set_a(), {1e-5, 1e-4}, 3);
    const std::string csv = to_csv(rep);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line.rfind("lambda,x_lo_num,x_hi_num,pi_lo_num,pi_hi_num,u_num,x_lo_pred_1,x_lo_diff_1", 0), 0u);
    const auto fields = std::count(line.begin(), line.end(), ',');
    while (std::getline(is, line)) EXPECT_EQ(std::count(line.begin(), line.end(), ','), fields);
    EXPECT_EQ(static_cast<std::size_t>(fields + 1), csv_header(3).size());
}

TEST(Report, CsvRoundTrip) {
    const auto rep = cross_validate(set_a(), {1e-5, 1e-4, 0.15}, 3);
    expect_same_report(rep, parse_csv(to_csv(rep)));
}

TEST(Report, JsonRoundTrip) {
    const auto rep = cross_validate(set_b(), {1e-5, 1e-4, 0.15}, 3);
    const auto back = report_from_json(nlohmann::ordered_json::parse(to_json(rep).dump()));
    expect_same_report(rep, back);
    EXPECT_EQ(back.params, rep.params);
    EXPECT_EQ(back.endow, rep.endow);
}

TEST(Report, Deterministic) {
    EXPECT_EQ(to_csv(cross_validate(set_a(), {1e-4}, 2)), to_csv(cross_validate(set_a(), {1e-4}, 2)));
}

TEST(Report, Format17Digits) {
    EXPECT_EQ(format_g17(0.1), "0.10000000000000001");
    EXPECT_EQ(std::stod(format_g17(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Report, MertonLineEndowment) {
    for (double pi : {0.64, 1.25}) {
        const auto e = merton_line_endowment(pi);
        EXPECT_NEAR(e.proportion(), pi, 1e-15);
        EXPECT_GT(e.wealth(), 0.0);
    }
}
