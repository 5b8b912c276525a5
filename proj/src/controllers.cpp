#include "adaptsde/controllers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <optional>
#include <limits>
#include <sstream>

#include "adaptsde/errors.hpp"
#include "adaptsde/rng.hpp"

namespace adaptsde {

double PartitionTrace::mesh() const {
    double m = 0.0;
    for (std::size_t i = 1; i < accepted.size(); ++i)
        m = std::max(m, dyadic_sub(accepted[i], accepted[i - 1]).fraction() * horizon);
    return m;
}

AuditReport no_skip_audit(const PartitionTrace& trace) {
    AuditReport rep;
    if (trace.accepted.empty() || trace.accepted.front() != DyadicTime::zero())
        throw InvalidArgument("malformed trace: accepted times must start at 0");
    std::set<DyadicTime> sampled{DyadicTime::zero()};
    DyadicTime cur = DyadicTime::zero();
    std::size_t next_acc = 1;
    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        const StepEvent& ev = trace.events[i];
        if (ev.t != cur)
            throw InvalidArgument("malformed trace: event " + std::to_string(i) + " starts at " + ev.t.str() +
                                  ", current time is " + cur.str());
        if (!(ev.t < ev.t_next)) throw InvalidArgument("malformed trace: empty step at event " + std::to_string(i));
        if (ev.accepted) {
            auto it = sampled.upper_bound(ev.t);
            if (it != sampled.end() && *it < ev.t_next) {
                rep.no_skip = false;
                rep.violations.push_back("step (" + ev.t.str() + ", " + ev.t_next.str() + ") skips sampled time " +
                                         it->str());
            }
            if (trace.dyadic_mode && !is_aligned_interval(ev.t, ev.t_next)) {
                rep.dyadic = false;
                rep.violations.push_back("step (" + ev.t.str() + ", " + ev.t_next.str() +
                                         ") is not an aligned dyadic interval");
            }
            if (next_acc >= trace.accepted.size() || trace.accepted[next_acc] != ev.t_next)
                throw InvalidArgument("malformed trace: accepted list disagrees with events");
            ++next_acc;
            cur = ev.t_next;
        }
        sampled.insert(ev.t_next);
    }
    if (next_acc != trace.accepted.size()) throw InvalidArgument("malformed trace: accepted list has extra times");
    if (cur != DyadicTime::one()) throw InvalidArgument("malformed trace: partition does not reach T");
    return rep;
}

namespace {

int exact_log2_ratio(double horizon, double h) {
    const double r = horizon / h;
    const double l = std::round(std::log2(r));
    if (l < 0 || l > kDyadicDepthLimit || std::ldexp(horizon, -static_cast<int>(l)) != h) return -1;
    return static_cast<int>(l);
}

DyadicTime snap_after(DyadicTime t, double target_fraction, int resolution) {
    DyadicTime s = DyadicTime::nearest_at(target_fraction, resolution);
    if (!(t < s)) s = dyadic_add(t, DyadicTime(1, resolution));
    return std::min(s, DyadicTime::one());
}

constexpr int kMaxSnapDepth = 40;
constexpr int kRelativeBits = 8;

/// End of a step of `frac` (fraction of T) after t. The grid is depth `resolution`, refined
/// so that the step spans at least 2^kRelativeBits grid cells (up to depth kMaxSnapDepth).
DyadicTime step_end(DyadicTime t, double frac, int resolution, bool round_down) {
    const int need = static_cast<int>(std::ceil(-std::log2(frac))) + kRelativeBits;
    const int m = std::max(resolution, std::min(kMaxSnapDepth, need));
    const double target = t.fraction() + frac;
    DyadicTime s = round_down ? DyadicTime::floor_at(target, m) : DyadicTime::nearest_at(target, m);
    if (!(t < s)) s = dyadic_add(t, DyadicTime(1, m));
    return std::min(s, DyadicTime::one());
}

class ConstantController final : public Controller {
public:
    ConstantController(double h, double horizon, int resolution) : h_(h), res_(resolution) {
        if (!(h > 0) || !std::isfinite(h)) throw InvalidArgument("constant controller: h must be positive");
        depth_ = exact_log2_ratio(horizon, h);
        frac_ = h / horizon;
    }
    std::string name() const override { return "constant"; }
    std::unique_ptr<Controller> clone() const override { return std::make_unique<ConstantController>(*this); }
    void reset() override { k_ = 0; }
    DyadicTime propose(const ProposalContext& ctx) override {
        if (depth_ >= 0) return dyadic_add(ctx.t, DyadicTime(1, depth_));
        return snap_after(ctx.t, static_cast<double>(k_ + 1) * frac_, res_);
    }
    Verdict judge(DyadicTime, DyadicTime, double, int, double) override {
        ++k_;
        return {true, std::numeric_limits<double>::quiet_NaN()};
    }
    bool dyadic() const override { return depth_ >= 0; }

private:
    double h_;
    int res_;
    int depth_ = -1;
    double frac_ = 0.0;
    std::int64_t k_ = 0;
};

class HalvingController final : public Controller {
public:
    HalvingController(double C, double h_init, double horizon) : C_(C) {
        if (!(C >= 0)) throw InvalidArgument("halving controller: C must be non-negative");
        depth0_ = exact_log2_ratio(horizon, h_init);
        if (depth0_ < 0) throw InvalidArgument("halving controller: h_init must be T / 2^m");
        reset();
    }
    std::string name() const override { return "halving"; }
    std::unique_ptr<Controller> clone() const override { return std::make_unique<HalvingController>(*this); }
    void reset() override {
        depth_ = depth0_;
        grow_ = false;
        sampled_.clear();
    }
    DyadicTime propose(const ProposalContext& ctx) override {
        sampled_.erase(sampled_.begin(), sampled_.upper_bound(ctx.t));
        // Grow back towards h_init while aligned and not jumping over sampled times.
        if (grow_)
            while (depth_ > depth0_ && ctx.t.depth() <= depth_ - 1 && fits(ctx, depth_ - 1)) --depth_;
        grow_ = false;
        while (depth_ < ctx.t.depth() || !fits(ctx, depth_)) ++depth_;
        return dyadic_add(ctx.t, DyadicTime(1, depth_));
    }
    Verdict judge(DyadicTime t, DyadicTime t_next, double err, int, double horizon) override {
        const double h = dyadic_sub(t_next, t).fraction() * horizon;
        const double bound = C_ * std::sqrt(h);
        const bool ok = std::isinf(C_) || err <= bound;
        const double scaled = bound > 0 ? err / bound : (err > 0 ? std::numeric_limits<double>::infinity() : 0.0);
        if (ok) {
            grow_ = true;
        } else {
            sampled_.insert(t_next);
            ++depth_;
        }
        return {ok, scaled};
    }
    bool dyadic() const override { return true; }

private:
    bool fits(const ProposalContext& ctx, int depth) const {
        if (depth > kDyadicDepthLimit) throw ResolutionExhausted("halving controller below depth limit");
        DyadicTime end = dyadic_add(ctx.t, DyadicTime(1, depth));
        if (ctx.barrier < end) return false;
        auto it = sampled_.upper_bound(ctx.t);
        return it == sampled_.end() || !(*it < end);
    }

    double C_;
    int depth0_;
    int depth_ = 0;
    bool grow_ = false;
    std::set<DyadicTime> sampled_;
};

class PrevisibleController final : public Controller {
public:
    PrevisibleController(StepFunction fn, int resolution, std::string label)
        : fn_(std::move(fn)), res_(resolution), label_(std::move(label)) {
        if (!fn_) throw InvalidArgument("previsible controller: empty step function");
        if (resolution < 0 || resolution > kDyadicDepthLimit)
            throw InvalidArgument("previsible controller: bad resolution");
    }
    std::string name() const override { return label_; }
    std::unique_ptr<Controller> clone() const override { return std::make_unique<PrevisibleController>(*this); }
    void reset() override {}
    DyadicTime propose(const ProposalContext& ctx) override {
        const double t = ctx.t.value(ctx.horizon);
        const double h = fn_(t, ctx.y);
        if (!(h > 0) || !std::isfinite(h))
            throw InvalidArgument("previsible controller: step function returned " + std::to_string(h));
        return std::min(step_end(ctx.t, h / ctx.horizon, res_, false), ctx.barrier);
    }
    Verdict judge(DyadicTime, DyadicTime, double, int, double) override {
        return {true, std::numeric_limits<double>::quiet_NaN()};
    }
    bool dyadic() const override { return false; }

private:
    StepFunction fn_;
    int res_;
    std::string label_;
};

class PiController final : public Controller {
public:
    explicit PiController(PiParams p) : p_(p) {
        p_.validate();
        reset();
    }
    std::string name() const override { return p_.clip_rejected ? "pi" : "pi-unclipped"; }
    std::unique_ptr<Controller> clone() const override { return std::make_unique<PiController>(*this); }
    void reset() override {
        h_ = p_.h_init;
        e_prev_ = 1.0;
        rejected_.clear();
        last_rejected_.reset();
    }
    DyadicTime propose(const ProposalContext& ctx) override {
        rejected_.erase(rejected_.begin(), rejected_.upper_bound(ctx.t));
        // Rounding down makes every retry strictly shorter than the step it replaces.
        DyadicTime end = step_end(ctx.t, h_ / ctx.horizon, p_.resolution, true);
        end = std::min(end, ctx.barrier);
        if (p_.clip_rejected && !rejected_.empty()) end = std::min(end, *rejected_.begin());
        if (last_rejected_ && last_rejected_->first == ctx.t && !(end < last_rejected_->second))
            throw ResolutionExhausted("pi controller cannot shrink the step at t = " + ctx.t.str());
        return end;
    }
    Verdict judge(DyadicTime t, DyadicTime t_next, double err, int d, double horizon) override {
        const double h = dyadic_sub(t_next, t).fraction() * horizon;
        const double e = err / (p_.C * std::sqrt(static_cast<double>(d)));
        if (e <= 1.0) {
            h_ = h * pi_factor(p_, e, e_prev_, p_.fac_max);
            e_prev_ = e;
            last_rejected_.reset();
            return {true, e};
        }
        rejected_.insert(t_next);
        last_rejected_ = std::make_pair(t, t_next);
        h_ = h * pi_factor(p_, e, e_prev_, p_.fac);
        return {false, e};
    }
    bool dyadic() const override { return false; }

private:
    PiParams p_;
    double h_ = 0.0;
    double e_prev_ = 1.0;
    std::set<DyadicTime> rejected_;
    std::optional<std::pair<DyadicTime, DyadicTime>> last_rejected_;
};

}  // namespace

std::unique_ptr<Controller> constant_controller(double h, double horizon, int resolution) {
    return std::make_unique<ConstantController>(h, horizon, resolution);
}

std::unique_ptr<Controller> halving_controller(double C, double h_init, double horizon) {
    return std::make_unique<HalvingController>(C, h_init, horizon);
}

std::unique_ptr<Controller> previsible_controller(StepFunction fn, int resolution, std::string label) {
    return std::make_unique<PrevisibleController>(std::move(fn), resolution, std::move(label));
}

double sabr_previsible_step(double C, double nu) { return std::log1p(C * std::exp(-2.0 * nu)); }

std::unique_ptr<Controller> sabr_previsible_controller(double C, int resolution) {
    if (!(C > 0)) throw InvalidArgument("previsible controller: C must be positive");
    return previsible_controller(
        [C](double, std::span<const double> y) {
            if (y.size() < 2) throw DimensionMismatch("sabr previsible step needs state (S, nu)");
            return sabr_previsible_step(C, y[1]);
        },
        resolution);
}

void PiParams::validate() const {
    if (!(C > 0)) throw InvalidArgument("pi controller: C must be positive");
    if (!(fac > 0 && fac < 1)) throw InvalidArgument("pi controller: fac must lie in (0,1)");
    if (!(fac_min > 0 && fac_min < 1 && fac_max > 1)) throw InvalidArgument("pi controller: need 0 < facmin < 1 < facmax");
    if (!(h_init > 0)) throw InvalidArgument("pi controller: h0 must be positive");
    if (resolution < 0 || resolution > kDyadicDepthLimit) throw InvalidArgument("pi controller: bad resolution");
}

double pi_factor(const PiParams& p, double e, double e_prev, double fac_max_now) {
    if (e == 0.0) return fac_max_now;
    double f = p.fac * std::pow(1.0 / e, p.k_i) * std::pow(e_prev / e, p.k_p);
    return std::clamp(f, p.fac_min, fac_max_now);
}

std::unique_ptr<Controller> pi_controller(PiParams params) { return std::make_unique<PiController>(params); }

// ---------------------------------------------------------------------------------------------

const std::vector<ControllerInfo>& controller_registry() {
    static const std::vector<ControllerInfo> reg{
        {"constant", {{"h", 0.25}, {"res", 24}}, "h", 0.0, "fixed step h"},
        {"halving", {{"C", 1.0}, {"h0", 0.25}}, "C", 2.0, "dyadic halving, accept iff error <= C sqrt(h)"},
        {"previsible", {{"C", 0.1}, {"res", 0}}, "C", 25.6, "SABR previsible step log(1 + C exp(-2 nu))"},
        {"pi",
         {{"C", 1.0},
          {"fac", 0.9},
          {"facmin", 0.2},
          {"facmax", 10.0},
          {"ki", 0.3},
          {"kp", 0.1},
          {"h0", 0.01},
          {"res", 0},
          {"clip", 1}},
         "C",
         0.8,
         "PI controller clipped at previously rejected times"},
    };
    return reg;
}

std::string ControllerSpec::str() const {
    std::ostringstream os;
    os << kind;
    char sep = ':';
    for (const auto& [k, v] : params) {
        os << sep << k << '=' << v;
        sep = ',';
    }
    return os.str();
}

namespace {

const ControllerInfo& controller_info(std::string_view kind) {
    for (const auto& ci : controller_registry())
        if (ci.kind == kind) return ci;
    throw InvalidArgument("unknown controller '" + std::string(kind) + "'");
}

double parse_number(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw InvalidArgument("bad number '" + s + "' for " + what);
    }
    if (used != s.size()) throw InvalidArgument("bad number '" + s + "' for " + what);
    return v;
}

}  // namespace

ControllerSpec parse_controller_spec(std::string_view text) {
    ControllerSpec spec;
    const auto colon = text.find(':');
    spec.kind = std::string(text.substr(0, colon));
    const ControllerInfo& info = controller_info(spec.kind);
    if (colon == std::string_view::npos) return spec;
    std::string rest(text.substr(colon + 1));
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw InvalidArgument("controller option '" + item + "' is not key=value");
        std::string key = item.substr(0, eq);
        if (!info.defaults.count(key))
            throw InvalidArgument("controller '" + spec.kind + "' has no option '" + key + "'");
        spec.params[key] = parse_number(item.substr(eq + 1), spec.kind + "." + key);
    }
    return spec;
}

std::unique_ptr<Controller> make_controller(const ControllerSpec& spec, double horizon) {
    const ControllerInfo& info = controller_info(spec.kind);
    std::map<std::string, double> p = info.defaults;
    for (const auto& [k, v] : spec.params) {
        if (!p.count(k)) throw InvalidArgument("controller '" + spec.kind + "' has no option '" + k + "'");
        p[k] = v;
    }
    auto res = static_cast<int>(p.count("res") ? p.at("res") : 24);
    if (spec.kind == "constant") return constant_controller(p.at("h"), horizon, res);
    if (spec.kind == "halving") return halving_controller(p.at("C"), p.at("h0"), horizon);
    if (spec.kind == "previsible") return sabr_previsible_controller(p.at("C"), res);
    PiParams pp;
    pp.C = p.at("C");
    pp.fac = p.at("fac");
    pp.fac_min = p.at("facmin");
    pp.fac_max = p.at("facmax");
    pp.k_i = p.at("ki");
    pp.k_p = p.at("kp");
    pp.h_init = p.at("h0");
    pp.resolution = res;
    pp.clip_rejected = p.at("clip") != 0.0;
    return pi_controller(pp);
}

// ---------------------------------------------------------------------------------------------

std::vector<DyadicTime> uniform_checkpoints(int count) {
    if (count < 1 || !std::has_single_bit(static_cast<unsigned>(count)))
        throw InvalidArgument("checkpoint count must be a power of two");
    const int n = std::countr_zero(static_cast<unsigned>(count));
    std::vector<DyadicTime> cps;
    for (int k = 1; k <= count; ++k) cps.emplace_back(k, n);
    return cps;
}

IntegrateResult integrate(const SdeSystem& sys, Stepper& stepper, Controller& ctl, BrownianTree& tree,
                          std::span<const double> y0, const IntegrateOptions& opts) {
    const int e = sys.state_dim(), d = sys.noise_dim();
    if (static_cast<int>(y0.size()) != e) throw DimensionMismatch("integrate: y0 size");
    if (tree.dim() != d) throw DimensionMismatch("integrate: tree dimension differs from noise dimension");
    const double T = tree.horizon();
    const bool needs_z = stepper.info().needs_z;

    IntegrateResult res;
    res.trace.horizon = T;
    res.trace.dyadic_mode = ctl.dyadic();
    res.trace.accepted.push_back(DyadicTime::zero());
    res.checkpoint_states.assign(opts.checkpoints.size() * e, 0.0);
    res.checkpoint_hit.assign(opts.checkpoints.size(), 0);

    std::vector<double> y(y0.begin(), y0.end());
    std::vector<double> z(needs_z ? d : 0);
    KeyedStream aux(opts.aux_seed ^ tree.seed(), 7);
    BrownianSample inc;
    StepOutput out;
    DyadicTime t = DyadicTime::zero();
    const DyadicTime floor_step(1, std::min(tree.max_depth(), kDyadicDepthLimit));
    std::size_t next_cp = 0;
    ctl.reset();

    for (std::size_t attempt = 0; t < DyadicTime::one(); ++attempt) {
        if (attempt >= opts.max_attempts) throw ResolutionExhausted("attempt budget exhausted at t = " + t.str());
        while (next_cp < opts.checkpoints.size() && !(t < opts.checkpoints[next_cp])) ++next_cp;
        const DyadicTime barrier = next_cp < opts.checkpoints.size() ? opts.checkpoints[next_cp] : DyadicTime::one();
        DyadicTime t_next = ctl.propose({t, y, barrier, T});
        if (!(t < t_next) || DyadicTime::one() < t_next)
            throw InvalidArgument(ctl.name() + " proposed invalid step " + t.str() + " -> " + t_next.str());
        if (dyadic_sub(t_next, t) < floor_step)
            throw ResolutionExhausted(ctl.name() + " step below 2^-" + std::to_string(tree.max_depth()) + " T");

        tree.increment_between(t, t_next, inc);
        PathIncrement pi = PathIncrement::from(inc);
        if (needs_z) {
            for (double& s : z) s = aux.rademacher();
            pi.z = z;
        }
        stepper.step(sys, y, pi, out);
        res.evaluations += static_cast<std::size_t>(out.evaluations);
        if (!std::isfinite(out.error_norm))
            throw NonFiniteState(sys.name() + ": non-finite step from t = " + std::to_string(t.value(T)));
        const Verdict v = ctl.judge(t, t_next, out.error_norm, d, T);
        if (opts.record_trace) res.trace.events.push_back({t, t_next, out.error_norm, v.error_scaled, v.accept});
        if (!v.accept) {
            ++res.rejected_steps;
            res.trace.rejected_times.push_back(t_next);
            continue;
        }
        for (double vy : out.y_next)
            if (!std::isfinite(vy))
                throw NonFiniteState(sys.name() + ": non-finite state at t = " +
                                     std::to_string(t_next.value(T)));
        y.swap(out.y_next);
        t = t_next;
        ++res.accepted_steps;
        if (opts.record_trace) res.trace.accepted.push_back(t);
        while (next_cp < opts.checkpoints.size() && !(t < opts.checkpoints[next_cp])) {
            if (opts.checkpoints[next_cp] == t) {
                std::copy(y.begin(), y.end(), res.checkpoint_states.begin() + next_cp * e);
                res.checkpoint_hit[next_cp] = 1;
            }
            ++next_cp;
        }
    }
    if (!opts.record_trace) res.trace.accepted.push_back(DyadicTime::one());
    res.y_final = std::move(y);
    return res;
}

// ---------------------------------------------------------------------------------------------

SkippingMaxResult run_skipping_max(const SdeSystem& sys, BrownianTree& tree, int N, bool skip) {
    if (sys.name() != "counterexample" || sys.state_dim() != 2 || sys.noise_dim() != 2)
        throw InvalidArgument("skipping-max controller: model/stepper mismatch (needs counterexample + heun)");
    if (N < 1 || !std::has_single_bit(static_cast<unsigned>(N)))
        throw InvalidArgument("skipping-max controller: N must be a power of two");
    const int n0 = std::countr_zero(static_cast<unsigned>(N));
    SkippingMaxResult res;
    res.trace.horizon = tree.horizon();
    res.trace.dyadic_mode = true;
    res.trace.accepted.push_back(DyadicTime::zero());
    Stepper heun(Method::Heun);
    StepOutput one, half1, half2;
    BrownianSample whole, left, right;
    std::vector<double> y{0.0, 0.0};
    for (int k = 0; k < N; ++k) {
        const DyadicInterval iv{n0, static_cast<std::uint64_t>(k)};
        tree.sample_into(iv, whole);
        tree.sample_into(iv.left_child(), left);
        tree.sample_into(iv.right_child(), right);
        heun.step(sys, y, PathIncrement::from(whole), one);
        heun.step(sys, y, PathIncrement::from(left), half1);
        heun.step(sys, half1.y_next, PathIncrement::from(right), half2);
        const DyadicTime a = iv.left(), m = iv.midpoint(), b = iv.right();
        if (skip && one.y_next[1] >= half2.y_next[1]) {
            ++res.one_step_choices;
            res.trace.events.push_back({a, m, half1.error_norm, 0.0, false});
            res.trace.rejected_times.push_back(m);
            res.trace.events.push_back({a, b, one.error_norm, 0.0, true});
            res.trace.accepted.push_back(b);
            y = one.y_next;
        } else {
            res.trace.events.push_back({a, b, one.error_norm, 0.0, false});
            res.trace.rejected_times.push_back(b);
            res.trace.events.push_back({a, m, half1.error_norm, 0.0, true});
            res.trace.events.push_back({m, b, half2.error_norm, 0.0, true});
            res.trace.accepted.push_back(m);
            res.trace.accepted.push_back(b);
            y = half2.y_next;
        }
    }
    res.y_final = y;
    return res;
}

}  // namespace adaptsde
