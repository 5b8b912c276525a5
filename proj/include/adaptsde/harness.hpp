#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaptsde/controllers.hpp"
#include "adaptsde/models.hpp"
#include "adaptsde/solvers.hpp"
#include "adaptsde/stats.hpp"

namespace adaptsde {

// ---------------------------------------------------------------- strong error

enum class ReferenceKind {
    /// Same stepper with constant step 2^-fine_depth T.
    FineConstant,
    /// Same stepper and controller kind at tolerance fine_tolerance (default min(grid)/8).
    FineAdaptive,
    /// Model's exact solution evaluated on the tree's W.
    Exact,
};

struct StrongErrorConfig {
    ModelSpec model;
    Method method = Method::Heun;
    /// Controller kind plus fixed options; the registry's sweep key is set from `grid`.
    ControllerSpec controller;
    std::vector<double> grid;
    ReferenceKind reference = ReferenceKind::FineConstant;
    int fine_depth = 12;
    double fine_tolerance = 0.0;
    int checkpoints = 32;
    std::size_t samples = 2000;
    std::uint64_t seed = 1;
    int threads = 1;
    double max_flagged_fraction = 0.01;
    int tree_max_depth = 40;
};

struct StrongErrorPoint {
    double param = 0.0;
    double avg_steps = 0.0;
    double avg_rejected = 0.0;
    double avg_evals = 0.0;
    /// max over checkpoints of the RMS distance to the reference.
    double error = 0.0;
    double std_err = 0.0;
    int worst_checkpoint = 0;
};

struct StrongErrorReport {
    std::string model;
    std::string method;
    std::string controller;
    std::string sweep_key;
    std::string reference;
    std::vector<StrongErrorPoint> points;
    /// log error against log h for constant steps, against log evaluations otherwise.
    LinearFit fit;
    /// Convergence order: slope vs h, or -slope vs evaluations.
    double rate = 0.0;
    std::size_t samples_requested = 0;
    std::size_t samples_used = 0;
    std::size_t samples_flagged = 0;
};

/// Coupled coarse/fine strong error. Each sample owns one Brownian tree shared by the
/// reference and every grid point. Samples with non-finite states are flagged and dropped
/// from every point; more than max_flagged_fraction flagged throws ExperimentFailed.
StrongErrorReport strong_error(const StrongErrorConfig& cfg);

/// Error of a power law fitted through the report at cost `evals` (log-log interpolation
/// between neighbouring points, extrapolation from the end segments).
double error_at_cost(const StrongErrorReport& rep, double evals);

// ---------------------------------------------------------------- counterexample

struct CounterexampleReport {
    double horizon = 1.0;
    int steps = 8;
    Estimate skipping;
    Estimate no_skip;
    /// Fraction of intervals where the single step was kept.
    double one_step_fraction = 0.0;
};

CounterexampleReport counterexample_experiment(double T, int N, std::size_t M, std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------- determinants

/// E|Z|^n = 2^{n/2} Gamma((n+1)/2) / sqrt(pi), the expected |det| of an n x n standard Gaussian matrix.
double gaussian_abs_moment(int n);
Estimate gaussian_determinant_mc(int n, std::size_t M, std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------- local error

struct LocalMseReport {
    double h = 0.0;
    /// E||Y_1 - y_h||^2 / h^2 for one Heun step, two Heun half steps and one SPaRK step.
    Estimate heun1, heun2, spark;
    Estimate ratio_spark_heun1;
    Estimate ratio_heun2_heun1;
};

/// From x = 1 on the counterexample system over [0,h]. The reference sums, over 2^fine_levels
/// sub-cells, x * dW^2 plus the cell's conditional Levy expectation given (W, H).
LocalMseReport local_mse_ratio(double h, std::size_t M, std::uint64_t seed, int threads = 1, int fine_levels = 8);

// ---------------------------------------------------------------- bridge moments

struct MomentCheck {
    std::string name;
    double estimate = 0.0;
    double std_err = 0.0;
    double target = 0.0;
    /// Extra absolute tolerance on top of the 4 std-err bracket (0 for pure MC checks).
    double abs_tol = 0.0;
    bool pass = false;
};

struct MomentReport {
    std::vector<MomentCheck> checks;
    bool all_pass() const;
};

/// Conditional and marginal moments of the midpoint split over M seeds (root length h).
MomentReport bridge_moment_tests(std::size_t M, std::uint64_t seed, double h = 1.0, int threads = 1);

/// Chains both children of random nodes and compares with the parent. Returns the largest
/// deviation measured in units of eps * (sum of magnitudes of the combined terms).
double chain_exactness_ulps(std::size_t nodes, std::uint64_t seed, int max_depth = 20);

// ---------------------------------------------------------------- Levy regression

struct LevyRegressionReport {
    /// int W^1 o dW^2 on (W^1 W^2, H^1 W^2, W^1 H^2); expected (1/2, 1, -1).
    Regression i12;
    /// int W^2 o dW^1 on (W^2 W^1, H^2 W^1, W^2 H^1); expected (1/2, 1, -1).
    Regression i21;
    /// int W^1 o dW^2 on (1/2 W^1 W^2, H^1 W^2 - W^1 H^2); expected (1, 1).
    Regression combined;
    std::size_t samples = 0;
    int fine_steps = 0;
};

/// Independent oracle: piecewise-linear interpolation of a Gaussian random walk with
/// `fine_steps` steps on [0,1]; integrals and H computed exactly for that path.
LevyRegressionReport levy_regression(std::size_t M, std::uint64_t seed, int fine_steps = 64, int threads = 1);

// ---------------------------------------------------------------- previsible bound

struct BoundRow {
    double t = 0.0;
    Estimate mean_step;
    double bound = 0.0;
    bool pass = false;
};

/// E log(1 + C exp(-2 nu_t)) with nu_t = -t/2 + W_t against log(1 + C e^t).
std::vector<BoundRow> previsible_bound_check(double C, const std::vector<double>& t_grid, std::size_t M,
                                             std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------- Holder decay

struct HolderConfig {
    double alpha = 0.4;
    std::vector<int> depths{2, 3, 4, 5, 6, 7, 8};
    int fine_depth = 14;
    /// Depth of the grid of (s,t) pairs; 0 means fine_depth.
    int pair_depth = 0;
    int seeds = 50;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct HolderReport {
    std::vector<int> depths;
    /// Seed-averaged first- and second-level distances per depth.
    std::vector<double> level1, level2;
    /// Per seed, per depth.
    std::vector<std::vector<double>> level1_by_seed, level2_by_seed;
    /// Fraction of seeds whose sequence decreases strictly at every depth (both levels).
    double monotone_fraction = 0.0;
    bool halved() const;
};

HolderReport holder_decay(const HolderConfig& cfg);

/// Level-2 Chen concatenation for d-dimensional paths: X = X1 + X2, XX = XX1 + XX2 + X1 (x) X2.
void chen_concat(std::span<const double> X1, std::span<const double> XX1, std::span<const double> X2,
                 std::span<const double> XX2, std::span<double> X, std::span<double> XX);

// ---------------------------------------------------------------- audits

struct AuditSummary {
    std::size_t runs = 0;
    std::size_t passed = 0;
    std::vector<std::string> first_violations;
};

/// Runs a controller on SABR with Heun over `runs` seeds and audits every trace.
AuditSummary audit_sabr_runs(const ControllerSpec& spec, std::size_t runs, std::uint64_t seed);

/// Drives a PI controller with a scripted error sequence (a large error, then exact steps)
/// so that an unclipped controller jumps over its rejected time.
PartitionTrace adversarial_pi_trace(PiParams params, double horizon = 1.0);

}  // namespace adaptsde
