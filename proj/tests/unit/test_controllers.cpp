#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "adaptsde/brownian_tree.hpp"
#include "adaptsde/controllers.hpp"
#include "adaptsde/errors.hpp"
#include "adaptsde/harness.hpp"
#include "adaptsde/models.hpp"
#include "adaptsde/rng.hpp"

using namespace adaptsde;

namespace {

IntegrateResult run(const ModelSpec& m, Method method, Controller& ctl, std::uint64_t seed, int max_depth = 40,
                    int checkpoints = 0) {
    BrownianTree tree(seed, m.system->noise_dim(), m.horizon, {max_depth, 0, true});
    Stepper st(method);
    IntegrateOptions opts;
    if (checkpoints > 0) opts.checkpoints = uniform_checkpoints(checkpoints);
    return integrate(*m.system, st, ctl, tree, m.y0, opts);
}

StepEvent ev(DyadicTime a, DyadicTime b, bool acc) { return {a, b, 0.0, 0.0, acc}; }

}  // namespace

TEST_CASE("constant controller") {
    const auto m = counterexample_model();
    auto ctl = constant_controller(0.125, 1.0);
    const auto r = run(m, Method::Heun, *ctl, 1);
    CHECK(r.accepted_steps == 8);
    CHECK(r.rejected_steps == 0);
    CHECK(r.evaluations == 16);
    CHECK(r.trace.mesh() == 0.125);
    CHECK(r.trace.dyadic_mode);
    CHECK(no_skip_audit(r.trace).ok());
    CHECK(r.trace.accepted.back() == DyadicTime::one());

    // Non-dyadic h: steps snap to a fine grid and the last one is truncated at T.
    auto odd = constant_controller(0.3, 1.0);
    const auto r2 = run(m, Method::Heun, *odd, 1);
    CHECK(r2.accepted_steps == 4);
    CHECK(r2.trace.mesh() == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(no_skip_audit(r2.trace).no_skip);
    CHECK_THROWS_AS(constant_controller(0.0, 1.0), InvalidArgument);
}

TEST_CASE("halving controller limits") {
    const auto m = sabr_model();
    auto loose = halving_controller(std::numeric_limits<double>::infinity(), 0.25, m.horizon);
    const auto r = run(m, Method::Heun, *loose, 2);
    CHECK(r.accepted_steps == 32);
    CHECK(r.rejected_steps == 0);
    CHECK(r.trace.mesh() == 0.25);

    auto strict = halving_controller(0.0, 0.25, m.horizon);
    CHECK_THROWS_AS(run(m, Method::Heun, *strict, 2, 20), ResolutionExhausted);
    CHECK_THROWS_AS(halving_controller(1.0, 0.3, 1.0), InvalidArgument);
}

TEST_CASE("halving controller traces are no-skip dyadic") {
    const auto m = sabr_model();
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto ctl = halving_controller(0.05, 0.25, m.horizon);
        const auto r = run(m, Method::Heun, *ctl, derive_seed(3, s), 40, 32);
        CHECK(r.rejected_steps > 0);
        const auto a = no_skip_audit(r.trace);
        CHECK(a.ok());
        for (char hit : r.checkpoint_hit) CHECK(hit);
    }
}

TEST_CASE("previsible step") {
    CHECK(sabr_previsible_step(0.1, 0.0) == doctest::Approx(0.0953101798043249).epsilon(1e-14));
    double prev = sabr_previsible_step(0.1, 0.0);
    for (double nu = 0.5; nu < 20; nu += 0.5) {
        const double h = sabr_previsible_step(0.1, nu);
        CHECK(h > 0.0);
        CHECK(h < prev);
        prev = h;
    }

    const auto m = sabr_model();
    auto ctl = sabr_previsible_controller(0.1);
    const auto r = run(m, Method::Heun, *ctl, 5, 40, 32);
    CHECK(r.rejected_steps == 0);
    CHECK(r.trace.accepted.back() == DyadicTime::one());
    CHECK(no_skip_audit(r.trace).no_skip);
    for (char hit : r.checkpoint_hit) CHECK(hit);

    auto bad = previsible_controller([](double, std::span<const double>) { return -1.0; });
    CHECK_THROWS_AS(run(m, Method::Heun, *bad, 5), InvalidArgument);
    auto nan = previsible_controller([](double, std::span<const double>) { return std::nan(""); });
    CHECK_THROWS_AS(run(m, Method::Heun, *nan, 5), InvalidArgument);
}

TEST_CASE("previsible steps follow the state at the left endpoint") {
    // Replay the accepted states through the step function: every step length must be the
    // function's value there, up to the grid snapping.
    const auto m = sabr_model();
    BrownianTree tree(6, 2, m.horizon);
    Stepper st(Method::Heun);
    auto ctl = sabr_previsible_controller(0.5);
    const auto r = integrate(*m.system, st, *ctl, tree, m.y0);
    const auto& acc = r.trace.accepted;
    REQUIRE(acc.size() > 3);
    // First step from nu = 0.
    const double h0 = dyadic_sub(acc[1], acc[0]).value(m.horizon);
    CHECK(h0 == doctest::Approx(sabr_previsible_step(0.5, 0.0)).epsilon(1e-2));
}

TEST_CASE("pi factor") {
    PiParams p;
    CHECK(pi_factor(p, 1.0, 1.0, p.fac_max) == doctest::Approx(0.9));
    // 0.9 * (1/e)^0.3 * (e_prev/e)^0.1 with e small enough to exceed 37.
    const double e = 1e-6;
    CHECK(0.9 * std::pow(1 / e, 0.3) * std::pow(1 / e, 0.1) > 37);
    CHECK(pi_factor(p, e, 1.0, p.fac_max) == 10.0);
    CHECK(pi_factor(p, 0.0, 1.0, p.fac_max) == 10.0);
    CHECK(pi_factor(p, 1e9, 1.0, p.fac_max) == 0.2);
    // After a rejection the growth is capped at fac, so the retry is shorter.
    CHECK(pi_factor(p, 1.5, 1e-6, p.fac) <= 0.9);

    PiParams bad;
    bad.fac = 1.2;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = PiParams{};
    bad.fac_max = 0.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("pi controller runs pass the audit and hit every checkpoint") {
    const auto m = sabr_model();
    for (std::uint64_t s = 0; s < 10; ++s) {
        PiParams p;
        p.C = 0.05;
        auto ctl = pi_controller(p);
        const auto r = run(m, Method::Heun, *ctl, derive_seed(4, s), 40, 32);
        const auto a = no_skip_audit(r.trace);
        CHECK(a.no_skip);
        for (char hit : r.checkpoint_hit) CHECK(hit);
        CHECK(r.trace.accepted.back() == DyadicTime::one());
    }
}

TEST_CASE("pi controller that cannot shrink stops with an error") {
    // A tolerance of effectively zero rejects everything; the run must end, not loop.
    LambdaSystemSpec s;
    s.formulation = Formulation::Stratonovich;
    s.drift = [](std::span<const double> y, std::span<double> o) { o[0] = y[0] * y[0]; };
    s.diffusion = [](std::span<const double> y, std::span<double> o) { o[0] = 1.0 + y[0]; };
    ModelSpec m{"quad", make_system(s), 1.0, {1.0}, {}, {}};
    PiParams p;
    p.C = 1e-300;
    auto ctl = pi_controller(p);
    CHECK_THROWS_AS(run(m, Method::Heun, *ctl, 1, 40), ResolutionExhausted);
}

TEST_CASE("audit detects a skipped sample") {
    PartitionTrace tr;
    tr.horizon = 1.0;
    tr.dyadic_mode = true;
    const DyadicTime z = DyadicTime::zero(), q(1, 2), h(1, 1), one = DyadicTime::one();
    // Reject [0,1/2], accept [0,1/4], then jump [1/4, 1] over the rejected 1/2.
    tr.accepted = {z, q, one};
    tr.events = {ev(z, h, false), ev(z, q, true), ev(q, one, true)};
    auto a = no_skip_audit(tr);
    CHECK_FALSE(a.no_skip);
    CHECK_FALSE(a.dyadic);
    REQUIRE(!a.violations.empty());
    CHECK(a.violations[0].find("skips sampled time 1/2") != std::string::npos);

    tr.accepted = {z, q, h, one};
    tr.events = {ev(z, h, false), ev(z, q, true), ev(q, h, true), ev(h, one, true)};
    a = no_skip_audit(tr);
    CHECK(a.no_skip);
    CHECK(a.dyadic);

    tr.events.pop_back();
    CHECK_THROWS_AS(no_skip_audit(tr), InvalidArgument);
}

TEST_CASE("unclipped pi fails the audit on the adversarial script") {
    PiParams p;
    p.clip_rejected = false;
    const auto bad = adversarial_pi_trace(p);
    CHECK_FALSE(no_skip_audit(bad).no_skip);
    p.clip_rejected = true;
    const auto good = adversarial_pi_trace(p);
    CHECK(no_skip_audit(good).no_skip);
}

TEST_CASE("skipping max controller") {
    const auto m = counterexample_model();
    BrownianTree tree(9, 2, 1.0);
    const auto skip = run_skipping_max(*m.system, tree, 8, true);
    CHECK(skip.trace.accepted.size() == 9 + (8 - skip.one_step_choices));
    CHECK(skip.one_step_choices > 0);
    CHECK(no_skip_audit(skip.trace).no_skip == (skip.one_step_choices == 0));
    const auto plain = run_skipping_max(*m.system, tree, 8, false);
    CHECK(plain.one_step_choices == 0);
    CHECK(no_skip_audit(plain.trace).no_skip);
    // x is exact either way.
    CHECK(skip.y_final[0] == doctest::Approx(tree.root_sample().W[0]).epsilon(1e-13));
    CHECK(skip.y_final[1] >= plain.y_final[1] - 1e-12);
    CHECK_THROWS_AS(run_skipping_max(*sabr_model().system, tree, 8), InvalidArgument);
}

TEST_CASE("controller specs") {
    auto spec = parse_controller_spec("pi:C=0.5,ki=0.2");
    CHECK(spec.kind == "pi");
    CHECK(spec.params.at("C") == 0.5);
    CHECK(spec.params.at("ki") == 0.2);
    CHECK(parse_controller_spec("halving").params.empty());
    CHECK_THROWS_AS(parse_controller_spec("bogus"), InvalidArgument);
    CHECK_THROWS_AS(parse_controller_spec("pi:zz=1"), InvalidArgument);
    CHECK_THROWS_AS(parse_controller_spec("pi:C=abc"), InvalidArgument);
    CHECK_THROWS_AS(parse_controller_spec("pi:C"), InvalidArgument);
    CHECK(make_controller(parse_controller_spec("constant:h=0.5"), 1.0)->name() == "constant");
    CHECK(make_controller(parse_controller_spec("pi:clip=0"), 1.0)->name() == "pi-unclipped");
    CHECK(controller_registry().size() == 4);
}

TEST_CASE("uniform checkpoints") {
    const auto c = uniform_checkpoints(4);
    REQUIRE(c.size() == 4);
    CHECK(c[0] == DyadicTime(1, 2));
    CHECK(c[3] == DyadicTime::one());
    CHECK_THROWS_AS(uniform_checkpoints(3), InvalidArgument);
}
