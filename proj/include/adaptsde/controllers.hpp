#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adaptsde/brownian_tree.hpp"
#include "adaptsde/dyadic.hpp"
#include "adaptsde/models.hpp"
#include "adaptsde/solvers.hpp"

namespace adaptsde {

/// One attempted step. Times are fractions of the horizon.
struct StepEvent {
    DyadicTime t;
    DyadicTime t_next;
    double error_norm = 0.0;
    /// Controller-normalized error (accept iff <= 1); NaN for controllers without tolerance.
    double error_scaled = 0.0;
    bool accepted = false;
};

struct PartitionTrace {
    double horizon = 1.0;
    /// Steps must be aligned dyadic intervals.
    bool dyadic_mode = false;
    std::vector<DyadicTime> accepted;
    std::vector<StepEvent> events;
    std::vector<DyadicTime> rejected_times;

    /// Largest accepted step in time units.
    double mesh() const;
    std::size_t steps() const { return accepted.empty() ? 0 : accepted.size() - 1; }
};

struct AuditReport {
    bool no_skip = true;
    bool dyadic = true;
    std::vector<std::string> violations;

    bool ok() const { return no_skip && dyadic; }
    explicit operator bool() const { return ok(); }
};

/// No accepted step (t_k, t_{k+1}) may strictly contain a time sampled by an earlier
/// attempt. In dyadic mode every accepted step must also be an aligned dyadic interval.
/// Throws InvalidArgument on a malformed log.
AuditReport no_skip_audit(const PartitionTrace& trace);

struct ProposalContext {
    DyadicTime t;
    std::span<const double> y;
    /// Next checkpoint strictly after t (or the horizon); adaptive controllers do not cross it.
    DyadicTime barrier;
    double horizon = 1.0;
};

struct Verdict {
    bool accept = true;
    double error_scaled = 0.0;
};

/// Step-size policy. A controller sees the Brownian data of an interval only through
/// the error norm handed to judge(), after it has committed to the interval.
class Controller {
public:
    virtual ~Controller() = default;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<Controller> clone() const = 0;
    /// Start of a new trajectory.
    virtual void reset() = 0;
    virtual DyadicTime propose(const ProposalContext& ctx) = 0;
    virtual Verdict judge(DyadicTime t, DyadicTime t_next, double error_norm, int noise_dim, double horizon) = 0;
    virtual bool dyadic() const = 0;
};

/// Fixed step h (time units). Aligned dyadic steps when T/h is a power of two, otherwise
/// steps land on round(k h / T) at depth `resolution`, the last one truncated at T.
std::unique_ptr<Controller> constant_controller(double h, double horizon, int resolution = 24);
/// Depth-first halving: accept iff ||Y - Y~|| <= C sqrt(h); halve on rejection; after acceptance
/// double while aligned, below h_init and not jumping over a sampled time.
std::unique_ptr<Controller> halving_controller(double C, double h_init, double horizon);
/// Step from the accepted state only: t_{k+1} = t_k + step_fn(t_k, y_k), rounded to the nearest
/// point of a dyadic grid of depth at least `resolution` and fine enough for 256 cells per step.
using StepFunction = std::function<double(double t, std::span<const double> y)>;
std::unique_ptr<Controller> previsible_controller(StepFunction step_fn, int resolution = 0,
                                                  std::string label = "previsible");
/// h(nu) = log(1 + C e^{-2 nu}) with nu = y[1] (SABR log-volatility).
double sabr_previsible_step(double C, double nu);
std::unique_ptr<Controller> sabr_previsible_controller(double C, int resolution = 0);

struct PiParams {
    double C = 1.0;
    double fac = 0.9;
    double fac_min = 0.2;
    double fac_max = 10.0;
    double k_i = 0.3;
    double k_p = 0.1;
    double h_init = 0.01;
    /// Minimum snapping depth; proposals round down on a grid with >= 256 cells per step.
    int resolution = 0;
    /// Clip proposals at previously rejected times ahead. Off only to exercise the audit.
    bool clip_rejected = true;

    void validate() const;
};

/// Growth factor Fac * (1/e)^K_I * (e_prev/e)^K_P clamped to [fac_min, fac_max_now]; e = 0 gives fac_max_now.
double pi_factor(const PiParams& p, double e, double e_prev, double fac_max_now);

std::unique_ptr<Controller> pi_controller(PiParams params);

/// Parsed `kind:key=value,...` controller description.
struct ControllerSpec {
    std::string kind;
    std::map<std::string, double> params;
    std::string str() const;
};

struct ControllerInfo {
    std::string_view kind;
    std::map<std::string, double> defaults;
    /// Parameter swept by the convergence experiment.
    std::string_view sweep_key;
    /// Default sweep is sweep_base * 2^-k, k = 1..6 (constant steps sweep h = 2^-k T, k = 4..9 instead).
    double sweep_base;
    std::string_view description;
};

const std::vector<ControllerInfo>& controller_registry();
/// Throws InvalidArgument for unknown kinds, unknown keys or malformed values.
ControllerSpec parse_controller_spec(std::string_view text);
/// Instantiates a spec for a model with horizon T. Missing keys take registry defaults.
std::unique_ptr<Controller> make_controller(const ControllerSpec& spec, double horizon);

struct IntegrateOptions {
    /// States are recorded when an accepted time equals a checkpoint (fractions of T).
    std::vector<DyadicTime> checkpoints;
    bool record_trace = true;
    std::size_t max_attempts = 50'000'000;
    /// Seed for auxiliary draws (Rademacher vectors).
    std::uint64_t aux_seed = 0;
};

struct IntegrateResult {
    std::vector<double> y_final;
    /// Row c holds the state at checkpoint c when checkpoint_hit[c].
    std::vector<double> checkpoint_states;
    std::vector<char> checkpoint_hit;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
    std::size_t evaluations = 0;
    PartitionTrace trace;
};

/// Runs one trajectory over [0,T] reading Brownian data from `tree`.
/// Throws NonFiniteState on inf/nan and ResolutionExhausted below the tree's depth floor.
IntegrateResult integrate(const SdeSystem& sys, Stepper& stepper, Controller& controller, BrownianTree& tree,
                          std::span<const double> y0, const IntegrateOptions& opts = {});

/// Uniform checkpoints k/count, k = 1..count.
std::vector<DyadicTime> uniform_checkpoints(int count);

struct SkippingMaxResult {
    std::vector<double> y_final;
    PartitionTrace trace;
    std::size_t one_step_choices = 0;
};

/// Counterexample controller on N coarse intervals (N a power of two): per interval takes
/// whichever of one Heun step or two half steps gives the larger y. With skip = false it
/// always takes the two half steps.
SkippingMaxResult run_skipping_max(const SdeSystem& sys, BrownianTree& tree, int N, bool skip = true);

}  // namespace adaptsde
