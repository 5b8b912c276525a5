#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "adaptsde/errors.hpp"
#include "adaptsde/harness.hpp"
#include "adaptsde/models.hpp"

using namespace adaptsde;

namespace {

ModelSpec additive_model() {
    LambdaSystemSpec s;
    s.state_dim = 2;
    s.noise_dim = 2;
    s.formulation = Formulation::Stratonovich;
    s.name = "additive";
    s.drift = [](std::span<const double>, std::span<double> o) { o[0] = o[1] = 0.0; };
    s.diffusion = [](std::span<const double>, std::span<double> o) {
        o[0] = 0.5;
        o[1] = -0.2;
        o[2] = 0.1;
        o[3] = 0.7;
    };
    s.second_order = [](std::span<const double>, std::span<const double>, std::span<const double>,
                        std::span<double> o) { o[0] = o[1] = 0.0; };
    return {"additive", make_system(s), 1.0, {0.3, -0.4}, {}, {}};
}

}  // namespace

TEST_CASE("strong error of a stepper against itself is zero") {
    StrongErrorConfig cfg;
    cfg.model = sabr_model();
    cfg.method = Method::Heun;
    cfg.controller = parse_controller_spec("constant");
    cfg.grid = {std::ldexp(8.0, -6)};
    cfg.fine_depth = 6;
    cfg.samples = 50;
    const auto rep = strong_error(cfg);
    REQUIRE(rep.points.size() == 1);
    CHECK(rep.points[0].error == 0.0);
    CHECK(rep.points[0].avg_evals == 128.0);
    CHECK(std::isnan(rep.rate));
    CHECK(rep.samples_used == 50);
}

TEST_CASE("additive noise without drift is integrated exactly by every method") {
    for (Method m : {Method::Euler, Method::Milstein, Method::Heun, Method::Spark, Method::ItoHeunRandomized}) {
        StrongErrorConfig cfg;
        cfg.model = additive_model();
        cfg.method = m;
        cfg.controller = parse_controller_spec("constant");
        cfg.grid = {0.25, 0.125, 0.0625};
        cfg.fine_depth = 8;
        cfg.samples = 20;
        const auto rep = strong_error(cfg);
        for (const auto& p : rep.points) CHECK(p.error < 1e-14);
    }
}

TEST_CASE("strong error is reproducible and thread independent") {
    StrongErrorConfig cfg;
    cfg.model = sabr_model();
    cfg.method = Method::Spark;
    cfg.controller = parse_controller_spec("pi");
    cfg.grid = {0.4, 0.2, 0.1};
    cfg.fine_tolerance = 0.05;
    cfg.reference = ReferenceKind::FineAdaptive;
    cfg.samples = 40;
    cfg.threads = 1;
    const auto a = strong_error(cfg);
    cfg.threads = 3;
    const auto b = strong_error(cfg);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].error == b.points[i].error);
        CHECK(a.points[i].avg_evals == b.points[i].avg_evals);
    }
    CHECK(a.rate == b.rate);
    // A looser tolerance costs less.
    CHECK(a.points[0].avg_evals < a.points[2].avg_evals);
}

TEST_CASE("exact reference on gbm") {
    StrongErrorConfig cfg;
    cfg.model = gbm_model(0.05, 0.5);
    cfg.method = Method::Euler;
    cfg.controller = parse_controller_spec("constant");
    cfg.grid = {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
    cfg.reference = ReferenceKind::Exact;
    cfg.samples = 400;
    const auto rep = strong_error(cfg);
    CHECK(rep.reference == "exact");
    CHECK(rep.rate == doctest::Approx(0.5).epsilon(0.3));

    cfg.model = additive_ou_model();
    CHECK_THROWS_AS(strong_error(cfg), InvalidArgument);
}

TEST_CASE("error_at_cost interpolates in log-log space") {
    StrongErrorReport rep;
    for (double c : {10.0, 20.0, 40.0}) {
        StrongErrorPoint p;
        p.avg_evals = c;
        p.error = 1.0 / std::sqrt(c);
        rep.points.push_back(p);
    }
    CHECK(error_at_cost(rep, 20.0) == doctest::Approx(1 / std::sqrt(20.0)));
    CHECK(error_at_cost(rep, 30.0) == doctest::Approx(1 / std::sqrt(30.0)));
    CHECK(error_at_cost(rep, 160.0) == doctest::Approx(1 / std::sqrt(160.0)));
    CHECK(error_at_cost(rep, 5.0) == doctest::Approx(1 / std::sqrt(5.0)));
}

TEST_CASE("counterexample experiment degenerate sizes") {
    const auto one = counterexample_experiment(1.0, 8, 1, 3);
    CHECK(one.skipping.samples == 1);
    CHECK(one.skipping.infinite_ci());
    CHECK(std::isinf(one.skipping.std_err));

    const auto small = counterexample_experiment(1.0, 8, 20000, 3);
    CHECK(small.skipping.within(0.125));
    CHECK(small.no_skip.within(0.0));
    CHECK(small.one_step_fraction > 0.3);
    CHECK(small.one_step_fraction < 0.7);
}

TEST_CASE("gaussian absolute moments") {
    CHECK(gaussian_abs_moment(1) == doctest::Approx(std::sqrt(2 / std::numbers::pi)).epsilon(1e-14));
    CHECK(gaussian_abs_moment(2) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(gaussian_abs_moment(3) == doctest::Approx(2 * std::sqrt(2.0) / std::sqrt(std::numbers::pi)).epsilon(1e-14));
    CHECK(gaussian_abs_moment(3) == doctest::Approx(1.59577).epsilon(1e-5));
    for (int n = 1; n <= 3; ++n) {
        const auto e = gaussian_determinant_mc(n, 100000, 11, 2);
        CAPTURE(n);
        CHECK(e.within(gaussian_abs_moment(n)));
    }
}

TEST_CASE("local mse coefficients are stable under halving h") {
    const auto a = local_mse_ratio(std::ldexp(1.0, -7), 20000, 5);
    const auto b = local_mse_ratio(std::ldexp(1.0, -8), 20000, 5);
    CHECK(a.heun1.mean == doctest::Approx(0.25).epsilon(0.1));
    CHECK(a.heun2.mean == doctest::Approx(0.125).epsilon(0.1));
    CHECK(a.spark.mean == doctest::Approx(1.0 / 12).epsilon(0.1));
    CHECK(std::abs(a.heun1.mean / b.heun1.mean - 1) < 0.1);
    CHECK(std::abs(a.heun2.mean / b.heun2.mean - 1) < 0.1);
    CHECK(std::abs(a.spark.mean / b.spark.mean - 1) < 0.1);
}

TEST_CASE("bridge moments at small scale") {
    const auto rep = bridge_moment_tests(20000, 7, 2.0);
    CHECK(rep.checks.size() > 20);
    for (const auto& c : rep.checks) {
        CAPTURE(c.name);
        CHECK(c.pass);
    }
    CHECK(rep.all_pass());
    CHECK(chain_exactness_ulps(2000, 3) <= 8.0);
}

TEST_CASE("levy regression at small scale") {
    const auto rep = levy_regression(20000, 9, 32);
    CHECK(rep.i12.coef[0] == doctest::Approx(0.5).epsilon(0.1));
    CHECK(rep.i12.coef[1] == doctest::Approx(1.0).epsilon(0.1));
    CHECK(rep.i12.coef[2] == doctest::Approx(-1.0).epsilon(0.1));
    CHECK(rep.combined.coef[0] == doctest::Approx(1.0).epsilon(0.1));
    CHECK(rep.combined.coef[1] == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("previsible bound") {
    const auto rows = previsible_bound_check(0.01, {0.0, 0.5, 1.0, 2.0}, 20000, 4);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].mean_step.mean == doctest::Approx(std::log1p(0.01)).epsilon(1e-15));
    CHECK(rows[0].bound == doctest::Approx(std::log1p(0.01)).epsilon(1e-15));
    CHECK(rows[2].bound == doctest::Approx(0.02682).epsilon(1e-3));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].pass);
        if (i > 0) CHECK(rows[i].bound > rows[i - 1].bound);
    }
}

TEST_CASE("chen concatenation") {
    const std::vector<double> X1{1, 0}, X2{0, 1}, Z4(4, 0.0);
    std::vector<double> X(2), XX(4);
    chen_concat(X1, Z4, X2, Z4, X, XX);
    CHECK(X == std::vector<double>{1, 1});
    CHECK(XX == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("holder distance vanishes at the fine depth and shrinks with depth") {
    HolderConfig cfg;
    cfg.depths = {2, 4, 8};
    cfg.fine_depth = 8;
    cfg.pair_depth = 8;
    cfg.seeds = 4;
    const auto rep = holder_decay(cfg);
    REQUIRE(rep.level1.size() == 3);
    CHECK(rep.level1[2] == 0.0);
    CHECK(rep.level2[2] == 0.0);
    CHECK(rep.level1[1] < rep.level1[0]);

    cfg.alpha = 0.3;
    CHECK_THROWS_AS(holder_decay(cfg), InvalidArgument);
}

TEST_CASE("audits over sabr runs") {
    const auto h = audit_sabr_runs(parse_controller_spec("halving:C=0.5"), 5, 1);
    CHECK(h.runs == 5);
    CHECK(h.passed == 5);
    const auto p = audit_sabr_runs(parse_controller_spec("pi:C=0.1"), 5, 1);
    CHECK(p.passed == 5);
}
