#include "adaptsde/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "adaptsde/errors.hpp"
#include "adaptsde/rng.hpp"

namespace adaptsde {

namespace {

constexpr std::size_t kChunk = 64;

const ControllerInfo& find_controller(const std::string& kind) {
    for (const auto& ci : controller_registry())
        if (ci.kind == kind) return ci;
    throw InvalidArgument("unknown controller '" + kind + "'");
}

double sq_dist(const double* a, const double* b, int e) {
    double s = 0.0;
    for (int i = 0; i < e; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

struct PointAcc {
    std::vector<double> sq, sq2, hits;
    double steps = 0, rejected = 0, evals = 0;
};

struct StrongAcc {
    std::vector<PointAcc> points;
    double used = 0, flagged = 0;
};

}  // namespace

StrongErrorReport strong_error(const StrongErrorConfig& cfg) {
    if (cfg.samples < 1) throw InvalidArgument("strong_error: need at least one sample");
    if (cfg.grid.empty()) throw InvalidArgument("strong_error: empty parameter grid");
    if (!cfg.model.system) throw InvalidArgument("strong_error: model has no system");
    const MethodInfo& mi = method_info(cfg.method);
    const SystemPtr sys = mi.formulation ? with_formulation(cfg.model.system, *mi.formulation) : cfg.model.system;
    const double T = cfg.model.horizon;
    const int e = sys->state_dim(), d = sys->noise_dim();
    const ControllerInfo& ci = find_controller(cfg.controller.kind);
    const std::string key(ci.sweep_key);

    std::vector<std::unique_ptr<Controller>> protos;
    for (double g : cfg.grid) {
        ControllerSpec s = cfg.controller;
        s.params[key] = g;
        protos.push_back(make_controller(s, T));
    }
    std::unique_ptr<Controller> ref_proto;
    std::string ref_desc;
    switch (cfg.reference) {
        case ReferenceKind::FineConstant:
            ref_proto = constant_controller(std::ldexp(T, -cfg.fine_depth), T);
            ref_desc = "constant:h=2^-" + std::to_string(cfg.fine_depth) + "T";
            break;
        case ReferenceKind::FineAdaptive: {
            ControllerSpec s = cfg.controller;
            const double tol = cfg.fine_tolerance > 0 ? cfg.fine_tolerance
                                                      : *std::min_element(cfg.grid.begin(), cfg.grid.end()) / 8.0;
            s.params[key] = tol;
            ref_proto = make_controller(s, T);
            ref_desc = s.str();
            break;
        }
        case ReferenceKind::Exact:
            if (!cfg.model.exact) throw InvalidArgument("strong_error: model '" + cfg.model.name + "' has no exact solution");
            ref_desc = "exact";
            break;
    }

    const std::vector<DyadicTime> cps = uniform_checkpoints(cfg.checkpoints);
    const std::size_t ncp = cps.size(), npt = protos.size();

    auto work = [&](std::size_t, std::size_t b, std::size_t end) {
        StrongAcc acc;
        acc.points.resize(npt);
        for (auto& p : acc.points) {
            p.sq.assign(ncp, 0.0);
            p.sq2.assign(ncp, 0.0);
            p.hits.assign(ncp, 0.0);
        }
        Stepper st(cfg.method);
        std::vector<std::unique_ptr<Controller>> ctls;
        for (const auto& p : protos) ctls.push_back(p->clone());
        std::unique_ptr<Controller> ref_ctl = ref_proto ? ref_proto->clone() : nullptr;
        std::vector<double> ref(ncp * e);
        std::vector<double> local_sq(npt * ncp), local_hit(npt * ncp), local_cost(npt * 3);
        IntegrateOptions opt;
        opt.checkpoints = cps;
        opt.record_trace = false;
        for (std::size_t i = b; i < end; ++i) {
            BrownianTree tree(derive_seed(cfg.seed, i), d, T, {cfg.tree_max_depth, std::size_t{1} << 14, true});
            opt.aux_seed = derive_seed(cfg.seed ^ 0x5bd1e995u, i);
            try {
                if (cfg.reference == ReferenceKind::Exact) {
                    for (std::size_t c = 0; c < ncp; ++c) {
                        auto W = tree.value_at(cps[c]);
                        auto y = cfg.model.exact(cfg.model.y0, cps[c].value(T), W);
                        std::copy(y.begin(), y.end(), ref.begin() + c * e);
                    }
                } else {
                    IntegrateResult r = integrate(*sys, st, *ref_ctl, tree, cfg.model.y0, opt);
                    for (std::size_t c = 0; c < ncp; ++c)
                        if (!r.checkpoint_hit[c]) throw Error("strong_error: reference missed a checkpoint");
                    ref = r.checkpoint_states;
                }
                for (std::size_t g = 0; g < npt; ++g) {
                    IntegrateResult r = integrate(*sys, st, *ctls[g], tree, cfg.model.y0, opt);
                    for (std::size_t c = 0; c < ncp; ++c) {
                        local_hit[g * ncp + c] = r.checkpoint_hit[c];
                        local_sq[g * ncp + c] =
                            r.checkpoint_hit[c] ? sq_dist(&r.checkpoint_states[c * e], &ref[c * e], e) : 0.0;
                    }
                    local_cost[g * 3] = static_cast<double>(r.accepted_steps);
                    local_cost[g * 3 + 1] = static_cast<double>(r.rejected_steps);
                    local_cost[g * 3 + 2] = static_cast<double>(r.evaluations);
                }
            } catch (const NonFiniteState&) {
                acc.flagged += 1;
                continue;
            }
            acc.used += 1;
            for (std::size_t g = 0; g < npt; ++g) {
                PointAcc& p = acc.points[g];
                for (std::size_t c = 0; c < ncp; ++c) {
                    const double s = local_sq[g * ncp + c];
                    p.sq[c] += s;
                    p.sq2[c] += s * s;
                    p.hits[c] += local_hit[g * ncp + c];
                }
                p.steps += local_cost[g * 3];
                p.rejected += local_cost[g * 3 + 1];
                p.evals += local_cost[g * 3 + 2];
            }
        }
        return acc;
    };
    auto chunks = run_chunked<StrongAcc>(cfg.samples, kChunk, cfg.threads, work);

    StrongAcc tot;
    tot.points.resize(npt);
    for (auto& p : tot.points) {
        p.sq.assign(ncp, 0.0);
        p.sq2.assign(ncp, 0.0);
        p.hits.assign(ncp, 0.0);
    }
    for (const StrongAcc& a : chunks) {
        tot.used += a.used;
        tot.flagged += a.flagged;
        for (std::size_t g = 0; g < npt; ++g) {
            for (std::size_t c = 0; c < ncp; ++c) {
                tot.points[g].sq[c] += a.points[g].sq[c];
                tot.points[g].sq2[c] += a.points[g].sq2[c];
                tot.points[g].hits[c] += a.points[g].hits[c];
            }
            tot.points[g].steps += a.points[g].steps;
            tot.points[g].rejected += a.points[g].rejected;
            tot.points[g].evals += a.points[g].evals;
        }
    }

    StrongErrorReport rep;
    rep.model = cfg.model.name;
    rep.method = std::string(mi.name);
    rep.controller = cfg.controller.kind;
    rep.sweep_key = key;
    rep.reference = ref_desc;
    rep.samples_requested = cfg.samples;
    rep.samples_used = static_cast<std::size_t>(tot.used);
    rep.samples_flagged = static_cast<std::size_t>(tot.flagged);
    if (tot.flagged > cfg.max_flagged_fraction * static_cast<double>(cfg.samples))
        throw ExperimentFailed("strong_error: " + std::to_string(rep.samples_flagged) + " of " +
                               std::to_string(cfg.samples) + " samples produced non-finite states");
    const double n = tot.used;
    for (std::size_t g = 0; g < npt; ++g) {
        const PointAcc& p = tot.points[g];
        StrongErrorPoint pt;
        pt.param = cfg.grid[g];
        pt.avg_steps = p.steps / n;
        pt.avg_rejected = p.rejected / n;
        pt.avg_evals = p.evals / n;
        pt.worst_checkpoint = -1;
        for (std::size_t c = 0; c < ncp; ++c) {
            if (p.hits[c] < n) continue;  // checkpoint not on this partition
            const double ms = p.sq[c] / n;
            const double S = std::sqrt(ms);
            if (pt.worst_checkpoint < 0 || S > pt.error) {
                pt.error = S;
                pt.worst_checkpoint = static_cast<int>(c) + 1;
                const double var = n > 1 ? std::max(0.0, (p.sq2[c] - n * ms * ms) / (n - 1)) : 0.0;
                const double se_ms = std::sqrt(var / n);
                pt.std_err = S > 0 ? se_ms / (2.0 * S) : 0.0;
            }
        }
        rep.points.push_back(pt);
    }

    const bool by_h = cfg.controller.kind == "constant";
    std::vector<double> xs, ys;
    for (const auto& pt : rep.points) {
        if (!(pt.error > 0)) continue;
        xs.push_back(by_h ? pt.param : pt.avg_evals);
        ys.push_back(pt.error);
    }
    if (xs.size() >= 3) {
        try {
            rep.fit = fit_rate(xs, ys);
            rep.rate = by_h ? rep.fit.slope : -rep.fit.slope;
        } catch (const InvalidArgument&) {
            rep.rate = std::numeric_limits<double>::quiet_NaN();
        }
    } else {
        rep.rate = std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

double error_at_cost(const StrongErrorReport& rep, double evals) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : rep.points)
        if (p.avg_evals > 0 && p.error > 0) pts.emplace_back(std::log(p.avg_evals), std::log(p.error));
    if (pts.size() < 2) throw InvalidArgument("error_at_cost: need two points with positive cost and error");
    std::sort(pts.begin(), pts.end());
    const double x = std::log(evals);
    std::size_t k = 1;
    while (k + 1 < pts.size() && pts[k].first < x) ++k;
    const auto [x0, y0] = pts[k - 1];
    const auto [x1, y1] = pts[k];
    if (x1 == x0) return std::exp(0.5 * (y0 + y1));
    return std::exp(y0 + (y1 - y0) * (x - x0) / (x1 - x0));
}

// ---------------------------------------------------------------- counterexample

CounterexampleReport counterexample_experiment(double T, int N, std::size_t M, std::uint64_t seed, int threads) {
    if (M < 1) throw InvalidArgument("counterexample_experiment: M must be >= 1");
    const ModelSpec model = counterexample_model();
    struct Acc {
        MomentSums skip, noskip;
        double one = 0;
    };
    auto chunks = run_chunked<Acc>(M, 1024, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        Acc a;
        for (std::size_t i = b; i < e; ++i) {
            BrownianTree tree(derive_seed(seed, i), 2, T);
            SkippingMaxResult s = run_skipping_max(*model.system, tree, N, true);
            SkippingMaxResult ns = run_skipping_max(*model.system, tree, N, false);
            a.skip.add(s.y_final[1]);
            a.noskip.add(ns.y_final[1]);
            a.one += static_cast<double>(s.one_step_choices);
        }
        return a;
    });
    Acc tot;
    for (const Acc& a : chunks) {
        tot.skip.merge(a.skip);
        tot.noskip.merge(a.noskip);
        tot.one += a.one;
    }
    CounterexampleReport rep;
    rep.horizon = T;
    rep.steps = N;
    rep.skipping = tot.skip.estimate();
    rep.no_skip = tot.noskip.estimate();
    rep.one_step_fraction = tot.one / (static_cast<double>(M) * N);
    return rep;
}

// ---------------------------------------------------------------- determinants

double gaussian_abs_moment(int n) {
    if (n < 1) throw InvalidArgument("gaussian_abs_moment: n must be >= 1");
    return std::pow(2.0, 0.5 * n) * std::tgamma(0.5 * (n + 1)) / std::sqrt(std::numbers::pi);
}

namespace {

double abs_det(std::vector<double>& a, int n) {
    double det = 1.0;
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::fabs(a[r * n + c]) > std::fabs(a[piv * n + c])) piv = r;
        if (a[piv * n + c] == 0.0) return 0.0;
        if (piv != c)
            for (int k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
        det *= a[c * n + c];
        for (int r = c + 1; r < n; ++r) {
            const double f = a[r * n + c] / a[c * n + c];
            for (int k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
        }
    }
    return std::fabs(det);
}

}  // namespace

Estimate gaussian_determinant_mc(int n, std::size_t M, std::uint64_t seed, int threads) {
    if (n < 1) throw InvalidArgument("gaussian_determinant_mc: n must be >= 1");
    if (M < 1) throw InvalidArgument("gaussian_determinant_mc: M must be >= 1");
    auto chunks = run_chunked<MomentSums>(M, 4096, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
        MomentSums s;
        KeyedStream rng(derive_seed(seed, c), 11);
        std::vector<double> a(static_cast<std::size_t>(n) * n);
        for (std::size_t i = b; i < e; ++i) {
            for (double& v : a) v = rng.normal();
            if (n == 2) {
                s.add(std::fabs(a[0] * a[3] - a[1] * a[2]));
            } else {
                s.add(abs_det(a, n));
            }
        }
        return s;
    });
    MomentSums tot;
    for (const auto& c : chunks) tot.merge(c);
    return tot.estimate();
}

// ---------------------------------------------------------------- local error

namespace {

/// Sums of a small vector and its outer product.
struct VecSums {
    static constexpr int K = 3;
    double n = 0;
    double s[K] = {};
    double ss[K][K] = {};
    void add(const double* x) {
        n += 1;
        for (int i = 0; i < K; ++i) {
            s[i] += x[i];
            for (int j = 0; j < K; ++j) ss[i][j] += x[i] * x[j];
        }
    }
    void merge(const VecSums& o) {
        n += o.n;
        for (int i = 0; i < K; ++i) {
            s[i] += o.s[i];
            for (int j = 0; j < K; ++j) ss[i][j] += o.ss[i][j];
        }
    }
    double mean(int i) const { return s[i] / n; }
    double cov(int i, int j) const { return (ss[i][j] - n * mean(i) * mean(j)) / (n - 1); }
    Estimate est(int i) const { return {mean(i), std::sqrt(std::max(0.0, cov(i, i)) / n), static_cast<std::size_t>(n)}; }
    /// mean(a) / mean(b) with a delta-method standard error.
    Estimate ratio(int a, int b) const {
        const double ma = mean(a), mb = mean(b), r = ma / mb;
        const double v = (cov(a, a) - 2 * r * cov(a, b) + r * r * cov(b, b)) / (mb * mb);
        return {r, std::sqrt(std::max(0.0, v) / n), static_cast<std::size_t>(n)};
    }
};

}  // namespace

LocalMseReport local_mse_ratio(double h, std::size_t M, std::uint64_t seed, int threads, int fine_levels) {
    if (!(h > 0)) throw InvalidArgument("local_mse_ratio: h must be positive");
    if (M < 2) throw InvalidArgument("local_mse_ratio: M must be >= 2");
    if (fine_levels < 1 || fine_levels > 20) throw InvalidArgument("local_mse_ratio: fine_levels in [1, 20]");
    const ModelSpec model = counterexample_model();
    const SdeSystem& sys = *model.system;
    auto chunks = run_chunked<VecSums>(M, 256, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        VecSums acc;
        Stepper heun(Method::Heun), spark(Method::Spark);
        StepOutput o1, o2, o3;
        BrownianSample root, left, right, cell;
        const std::vector<double> y0{1.0, 0.0};
        for (std::size_t i = b; i < e; ++i) {
            BrownianTree tree(derive_seed(seed, i), 2, h);
            tree.sample_into({0, 0}, root);
            tree.sample_into({1, 0}, left);
            tree.sample_into({1, 1}, right);
            // Reference: x * dW^2 per cell plus the cell's conditional Levy term.
            double x = 1.0, y = 0.0;
            const std::uint64_t cells = std::uint64_t{1} << fine_levels;
            for (std::uint64_t k = 0; k < cells; ++k) {
                tree.sample_into({fine_levels, k}, cell);
                const double W1 = cell.W[0], W2 = cell.W[1], H1 = cell.H[0], H2 = cell.H[1];
                y += x * W2 + 0.5 * W1 * W2 + H1 * W2 - W1 * H2;
                x += W1;
            }
            const double ref[2] = {1.0 + root.W[0], y};
            heun.step(sys, y0, PathIncrement::from(root), o1);
            heun.step(sys, y0, PathIncrement::from(left), o2);
            const std::vector<double> mid = o2.y_next;
            heun.step(sys, mid, PathIncrement::from(right), o2);
            spark.step(sys, y0, PathIncrement::from(root), o3);
            const double h2 = h * h;
            const double v[3] = {sq_dist(o1.y_next.data(), ref, 2) / h2, sq_dist(o2.y_next.data(), ref, 2) / h2,
                                 sq_dist(o3.y_next.data(), ref, 2) / h2};
            acc.add(v);
        }
        return acc;
    });
    VecSums tot;
    for (const auto& c : chunks) tot.merge(c);
    LocalMseReport rep;
    rep.h = h;
    rep.heun1 = tot.est(0);
    rep.heun2 = tot.est(1);
    rep.spark = tot.est(2);
    rep.ratio_spark_heun1 = tot.ratio(2, 0);
    rep.ratio_heun2_heun1 = tot.ratio(1, 0);
    return rep;
}

// ---------------------------------------------------------------- bridge moments

bool MomentReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const MomentCheck& c) { return c.pass; });
}

MomentReport bridge_moment_tests(std::size_t M, std::uint64_t seed, double h, int threads) {
    if (M < 2) throw InvalidArgument("bridge_moment_tests: M must be >= 2");
    // Per-sample statistics whose means have known targets.
    struct Stat {
        std::string name;
        double target;
    };
    const std::vector<Stat> stats{
        {"E[W_L - W/2 - 3H/2 | W,H]", 0.0},
        {"Var(W_L | W,H)", h / 16},
        {"E[H_L - H/4 | W,H]", 0.0},
        {"E[H_R - H/4 | W,H]", 0.0},
        {"Var(H_L | W,H)", 7 * h / 192},
        {"Var(H_R | W,H)", 7 * h / 192},
        {"Cov(W_L,H_L | W,H)", -h / 32},
        {"Cov(W_L,H_R | W,H)", -h / 32},
        {"Cov(H_L,H_R | W,H)", -h / 192},
        {"Cov(W_L,W_R | W,H)", -h / 16},
        {"E[W_L]", 0.0},
        {"Var(W_L)", h / 2},
        {"Var(W_R)", h / 2},
        {"Cov(W_L,W_R)", 0.0},
        {"Var(H_L)", h / 24},
        {"Cov(W_L,H_L)", 0.0},
        {"Cov(H_L,H_R)", 0.0},
    };
    const int depth_stats = 4;  // depths 0..3, four statistics each
    const std::size_t ns = stats.size() + 4 * depth_stats;
    struct Acc {
        std::vector<MomentSums> m;
        LeastSquares wl{2}, hl{2}, hsum{2};
    };
    auto chunks = run_chunked<Acc>(M, 1024, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        Acc a;
        a.m.resize(ns);
        BrownianSample P, L, R, node;
        for (std::size_t i = b; i < e; ++i) {
            BrownianTree tree(derive_seed(seed, i), 1, h);
            tree.sample_into({0, 0}, P);
            tree.sample_into({1, 0}, L);
            tree.sample_into({1, 1}, R);
            const double W = P.W[0], H = P.H[0];
            const double rWL = L.W[0] - 0.5 * W - 1.5 * H, rWR = R.W[0] - 0.5 * W + 1.5 * H;
            const double rHL = L.H[0] - 0.25 * H, rHR = R.H[0] - 0.25 * H;
            const double v[] = {rWL,       rWL * rWL,          rHL,         rHR,         rHL * rHL,
                                rHR * rHR, rWL * rHL,          rWL * rHR,   rHL * rHR,   rWL * rWR,
                                L.W[0],    L.W[0] * L.W[0],    R.W[0] * R.W[0], L.W[0] * R.W[0],
                                L.H[0] * L.H[0], L.W[0] * L.H[0], L.H[0] * R.H[0]};
            for (std::size_t k = 0; k < stats.size(); ++k) a.m[k].add(v[k]);
            for (int n = 0; n < depth_stats; ++n) {
                tree.sample_into({n, 0}, node);
                const std::size_t o = stats.size() + 4 * n;
                a.m[o].add(node.W[0]);
                a.m[o + 1].add(node.W[0] * node.W[0]);
                a.m[o + 2].add(node.H[0] * node.H[0]);
                a.m[o + 3].add(node.W[0] * node.H[0]);
            }
            const double x[2] = {W, H};
            a.wl.add(x, L.W[0]);
            a.hl.add(x, L.H[0]);
            a.hsum.add(x, L.H[0] + R.H[0]);
        }
        return a;
    });
    Acc tot;
    tot.m.resize(ns);
    for (const Acc& a : chunks) {
        for (std::size_t k = 0; k < ns; ++k) tot.m[k].merge(a.m[k]);
        tot.wl.merge(a.wl);
        tot.hl.merge(a.hl);
        tot.hsum.merge(a.hsum);
    }
    MomentReport rep;
    auto push = [&](std::string name, double est, double se, double target, double abs_tol) {
        MomentCheck c{std::move(name), est, se, target, abs_tol, false};
        c.pass = std::fabs(est - target) <= 4.0 * se + abs_tol;
        if (abs_tol > 0) c.pass = c.pass && std::fabs(est - target) <= abs_tol + 4.0 * se;
        rep.checks.push_back(std::move(c));
    };
    for (std::size_t k = 0; k < stats.size(); ++k) {
        Estimate e = tot.m[k].estimate();
        push(stats[k].name, e.mean, e.std_err, stats[k].target, 0.0);
    }
    for (int n = 0; n < depth_stats; ++n) {
        const double hn = std::ldexp(h, -n);
        const std::size_t o = stats.size() + 4 * n;
        const std::string tag = " depth " + std::to_string(n);
        const double targets[4] = {0.0, hn, hn / 12, 0.0};
        const char* names[4] = {"E[W]", "Var(W)", "Var(H)", "Cov(W,H)"};
        for (int j = 0; j < 4; ++j) {
            Estimate e = tot.m[o + j].estimate();
            push(std::string(names[j]) + tag, e.mean, e.std_err, targets[j], 0.0);
        }
    }
    const Regression wl = tot.wl.solve(), hl = tot.hl.solve(), hs = tot.hsum.solve();
    push("regress W_L on W", wl.coef[0], wl.std_err[0], 0.5, 0.0);
    push("regress W_L on H", wl.coef[1], wl.std_err[1], 1.5, 0.0);
    push("regress H_L on W", hl.coef[0], hl.std_err[0], 0.0, 0.0);
    push("regress H_L on H", hl.coef[1], hl.std_err[1], 0.25, 0.0);
    push("regress H_L + H_R on H", hs.coef[1], hs.std_err[1], 0.5, 0.0);
    return rep;
}

double chain_exactness_ulps(std::size_t nodes, std::uint64_t seed, int max_depth) {
    KeyedStream pick(seed, 3);
    BrownianTree tree(seed, 2, 1.0, {std::max(40, max_depth + 1), 0, true});
    double worst = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    BrownianSample P, L, R;
    for (std::size_t i = 0; i < nodes; ++i) {
        const int n = static_cast<int>(pick.uniform() * max_depth);
        const auto k = static_cast<std::uint64_t>(pick.uniform() * std::ldexp(1.0, n));
        const DyadicInterval iv{n, k};
        tree.sample_into(iv, P);
        tree.sample_into(iv.left_child(), L);
        tree.sample_into(iv.right_child(), R);
        const BrownianSample C = chain_samples(L, R);
        for (int j = 0; j < 2; ++j) {
            const double scale = std::fabs(P.W[j]) + std::fabs(P.H[j]) + std::fabs(L.W[j]) + std::fabs(R.W[j]) +
                                 std::fabs(L.H[j]) + std::fabs(R.H[j]);
            worst = std::max(worst, std::fabs(C.W[j] - P.W[j]) / (eps * scale));
            worst = std::max(worst, std::fabs(C.H[j] - P.H[j]) / (eps * scale));
        }
    }
    return worst;
}

// ---------------------------------------------------------------- Levy regression

LevyRegressionReport levy_regression(std::size_t M, std::uint64_t seed, int fine_steps, int threads) {
    if (fine_steps < 1) throw InvalidArgument("levy_regression: fine_steps must be >= 1");
    if (M < 4) throw InvalidArgument("levy_regression: M must be >= 4");
    struct Acc {
        LeastSquares a{3}, b{3}, c{2};
    };
    const double dt = 1.0 / fine_steps, sd = std::sqrt(dt);
    auto chunks = run_chunked<Acc>(M, 4096, threads, [&](std::size_t ch, std::size_t b, std::size_t e) {
        Acc acc;
        KeyedStream rng(derive_seed(seed, ch), 21);
        for (std::size_t i = b; i < e; ++i) {
            double W1 = 0, W2 = 0, A1 = 0, A2 = 0, I12 = 0, I21 = 0;
            for (int k = 0; k < fine_steps; ++k) {
                const double d1 = sd * rng.normal(), d2 = sd * rng.normal();
                I12 += (W1 + 0.5 * d1) * d2;
                I21 += (W2 + 0.5 * d2) * d1;
                A1 += (W1 + 0.5 * d1) * dt;
                A2 += (W2 + 0.5 * d2) * dt;
                W1 += d1;
                W2 += d2;
            }
            const double H1 = A1 - 0.5 * W1, H2 = A2 - 0.5 * W2;
            const double x12[3] = {W1 * W2, H1 * W2, W1 * H2};
            const double x21[3] = {W2 * W1, H2 * W1, W2 * H1};
            const double xc[2] = {0.5 * W1 * W2, H1 * W2 - W1 * H2};
            acc.a.add(x12, I12);
            acc.b.add(x21, I21);
            acc.c.add(xc, I12);
        }
        return acc;
    });
    Acc tot;
    for (const Acc& a : chunks) {
        tot.a.merge(a.a);
        tot.b.merge(a.b);
        tot.c.merge(a.c);
    }
    LevyRegressionReport rep;
    rep.i12 = tot.a.solve();
    rep.i21 = tot.b.solve();
    rep.combined = tot.c.solve();
    rep.samples = M;
    rep.fine_steps = fine_steps;
    return rep;
}

// ---------------------------------------------------------------- previsible bound

std::vector<BoundRow> previsible_bound_check(double C, const std::vector<double>& t_grid, std::size_t M,
                                             std::uint64_t seed, int threads) {
    if (!(C > 0)) throw InvalidArgument("previsible_bound_check: C must be positive");
    if (M < 1) throw InvalidArgument("previsible_bound_check: M must be >= 1");
    const std::size_t nt = t_grid.size();
    for (double t : t_grid)
        if (!(t >= 0)) throw InvalidArgument("previsible_bound_check: times must be non-negative");
    auto chunks = run_chunked<std::vector<MomentSums>>(M, 4096, threads, [&](std::size_t ch, std::size_t b, std::size_t e) {
        std::vector<MomentSums> s(nt);
        KeyedStream rng(derive_seed(seed, ch), 31);
        for (std::size_t i = b; i < e; ++i)
            for (std::size_t k = 0; k < nt; ++k) {
                const double t = t_grid[k];
                const double nu = -0.5 * t + std::sqrt(t) * rng.normal();
                s[k].add(sabr_previsible_step(C, nu));
            }
        return s;
    });
    std::vector<MomentSums> tot(nt);
    for (const auto& c : chunks)
        for (std::size_t k = 0; k < nt; ++k) tot[k].merge(c[k]);
    std::vector<BoundRow> rows;
    for (std::size_t k = 0; k < nt; ++k) {
        BoundRow r;
        r.t = t_grid[k];
        r.mean_step = tot[k].estimate();
        r.bound = std::log1p(C * std::exp(r.t));
        const double se = std::isfinite(r.mean_step.std_err) ? r.mean_step.std_err : 0.0;
        // Tiny slack for the deterministic t = 0 case, where both sides are log(1+C).
        r.pass = r.mean_step.mean >= r.bound - 4.0 * se - 1e-15;
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------- Holder decay

void chen_concat(std::span<const double> X1, std::span<const double> XX1, std::span<const double> X2,
                 std::span<const double> XX2, std::span<double> X, std::span<double> XX) {
    const std::size_t d = X1.size();
    if (X2.size() != d || X.size() != d || XX1.size() != d * d || XX2.size() != d * d || XX.size() != d * d)
        throw DimensionMismatch("chen_concat: sizes");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) XX[i * d + j] = XX1[i * d + j] + XX2[i * d + j] + X1[i] * X2[j];
    for (std::size_t i = 0; i < d; ++i) X[i] = X1[i] + X2[i];
}

bool HolderReport::halved() const {
    if (level1.empty()) return false;
    return level1.back() <= 0.5 * level1.front() && level2.back() <= 0.5 * level2.front();
}

namespace {

/// Values and prefix Levy areas of a 2-d piecewise-linear path on the pair grid.
struct PairGridPath {
    std::vector<double> x1, x2, area;
};

PairGridPath on_pair_grid(const std::vector<double>& p1, const std::vector<double>& p2, int stride) {
    PairGridPath g;
    const std::size_t n = p1.size();
    double area = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) {
            const double a1 = p1[k - 1] - p1[0], a2 = p2[k - 1] - p2[0];
            const double d1 = p1[k] - p1[k - 1], d2 = p2[k] - p2[k - 1];
            area += 0.5 * (a1 * d2 - a2 * d1);
        }
        if (k % static_cast<std::size_t>(stride) == 0) {
            g.x1.push_back(p1[k]);
            g.x2.push_back(p2[k]);
            g.area.push_back(area);
        }
    }
    return g;
}

/// Squared sup-distances (level 1 and level 2) over all pairs of the grid.
std::pair<double, double> holder_distances(const PairGridPath& a, const PairGridPath& p, double alpha, double dt) {
    const std::size_t n = a.x1.size();
    std::vector<double> w1(n), w2(n);
    for (std::size_t lag = 1; lag < n; ++lag) {
        const double len = lag * dt;
        w1[lag] = std::pow(len, -2.0 * alpha);
        w2[lag] = std::pow(len, -4.0 * alpha);
    }
    double best1 = 0.0, best2 = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double ai1 = a.x1[i], ai2 = a.x2[i], pi1 = p.x1[i], pi2 = p.x2[i];
        const double oa1 = ai1 - a.x1[0], oa2 = ai2 - a.x2[0], op1 = pi1 - p.x1[0], op2 = pi2 - p.x2[0];
        const double ar = a.area[i], pr = p.area[i];
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double xa1 = a.x1[j] - ai1, xa2 = a.x2[j] - ai2;
            const double xp1 = p.x1[j] - pi1, xp2 = p.x2[j] - pi2;
            const double e1 = xa1 - xp1, e2 = xa2 - xp2;
            const double la = a.area[j] - ar - 0.5 * (oa1 * xa2 - oa2 * xa1);
            const double lp = p.area[j] - pr - 0.5 * (op1 * xp2 - op2 * xp1);
            const double s11 = 0.5 * (xa1 * xa1 - xp1 * xp1);
            const double s22 = 0.5 * (xa2 * xa2 - xp2 * xp2);
            const double s12 = 0.5 * (xa1 * xa2 - xp1 * xp2);
            const double dl = la - lp;
            const double lvl1 = (e1 * e1 + e2 * e2) * w1[j - i];
            const double lvl2 = (s11 * s11 + s22 * s22 + 2.0 * s12 * s12 + 2.0 * dl * dl) * w2[j - i];
            m1 = std::max(m1, lvl1);
            m2 = std::max(m2, lvl2);
        }
        best1 = std::max(best1, m1);
        best2 = std::max(best2, m2);
    }
    return {best1, best2};
}

}  // namespace

HolderReport holder_decay(const HolderConfig& cfg) {
    if (!(cfg.alpha > 1.0 / 3.0 && cfg.alpha < 0.5)) throw InvalidArgument("holder_decay: alpha must lie in (1/3, 1/2)");
    if (cfg.fine_depth < 1 || cfg.fine_depth > 20) throw InvalidArgument("holder_decay: fine_depth in [1, 20]");
    const int F = cfg.fine_depth;
    const int Q = cfg.pair_depth > 0 ? std::min(cfg.pair_depth, F) : F;
    for (int n : cfg.depths)
        if (n < 0 || n > F) throw InvalidArgument("holder_decay: depths must lie in [0, fine_depth]");
    if (cfg.seeds < 1) throw InvalidArgument("holder_decay: need at least one seed");
    const std::size_t nd = cfg.depths.size();
    using Row = std::pair<std::vector<double>, std::vector<double>>;
    auto rows = run_chunked<Row>(static_cast<std::size_t>(cfg.seeds), 1, cfg.threads,
                                 [&](std::size_t s, std::size_t, std::size_t) {
        BrownianTree tree(derive_seed(cfg.seed, s), 2, 1.0, {std::max(40, F), 0, true});
        const std::size_t N = std::size_t{1} << F;
        std::vector<double> p1(N + 1, 0.0), p2(N + 1, 0.0);
        BrownianSample leaf;
        for (std::size_t k = 0; k < N; ++k) {
            tree.sample_into({F, k}, leaf);
            p1[k + 1] = p1[k] + leaf.W[0];
            p2[k + 1] = p2[k] + leaf.W[1];
        }
        const int stride = 1 << (F - Q);
        const PairGridPath fine = on_pair_grid(p1, p2, stride);
        const double dt = std::ldexp(1.0, -Q);
        Row r;
        std::vector<double> a1(N + 1), a2(N + 1);
        for (int n : cfg.depths) {
            const std::size_t step = std::size_t{1} << (F - n);
            for (std::size_t k = 0; k <= N; ++k) {
                const std::size_t lo = (k / step) * step, hi = std::min(N, lo + step);
                const double w = hi == lo ? 0.0 : static_cast<double>(k - lo) / static_cast<double>(step);
                a1[k] = p1[lo] + w * (p1[hi] - p1[lo]);
                a2[k] = p2[lo] + w * (p2[hi] - p2[lo]);
            }
            const PairGridPath approx = on_pair_grid(a1, a2, stride);
            auto [d1, d2] = holder_distances(approx, fine, cfg.alpha, dt);
            r.first.push_back(std::sqrt(d1));
            r.second.push_back(std::sqrt(d2));
        }
        return r;
    });
    HolderReport rep;
    rep.depths = cfg.depths;
    rep.level1.assign(nd, 0.0);
    rep.level2.assign(nd, 0.0);
    std::size_t monotone = 0;
    for (const Row& r : rows) {
        rep.level1_by_seed.push_back(r.first);
        rep.level2_by_seed.push_back(r.second);
        bool mono = true;
        for (std::size_t k = 0; k < nd; ++k) {
            rep.level1[k] += r.first[k] / cfg.seeds;
            rep.level2[k] += r.second[k] / cfg.seeds;
            if (k > 0 && !(r.first[k] < r.first[k - 1] && r.second[k] < r.second[k - 1])) mono = false;
        }
        if (mono) ++monotone;
    }
    rep.monotone_fraction = static_cast<double>(monotone) / cfg.seeds;
    return rep;
}

// ---------------------------------------------------------------- audits

AuditSummary audit_sabr_runs(const ControllerSpec& spec, std::size_t runs, std::uint64_t seed) {
    const ModelSpec model = sabr_model();
    Stepper st(Method::Heun);
    auto ctl = make_controller(spec, model.horizon);
    AuditSummary sum;
    IntegrateOptions opt;
    opt.checkpoints = uniform_checkpoints(32);
    for (std::size_t r = 0; r < runs; ++r) {
        BrownianTree tree(derive_seed(seed, r), 2, model.horizon);
        IntegrateResult res = integrate(*model.system, st, *ctl, tree, model.y0, opt);
        AuditReport a = no_skip_audit(res.trace);
        ++sum.runs;
        if (a.ok()) {
            ++sum.passed;
        } else if (sum.first_violations.size() < 5) {
            sum.first_violations.push_back("seed " + std::to_string(r) + ": " + a.violations.front());
        }
    }
    return sum;
}

PartitionTrace adversarial_pi_trace(PiParams params, double horizon) {
    auto ctl = pi_controller(params);
    PartitionTrace tr;
    tr.horizon = horizon;
    tr.accepted.push_back(DyadicTime::zero());
    DyadicTime t = DyadicTime::zero();
    const std::vector<double> y{0.0};
    const double big = 100.0 * params.C;
    bool first = true;
    for (int guard = 0; t < DyadicTime::one(); ++guard) {
        if (guard > 100000) throw Error("adversarial_pi_trace: did not terminate");
        const DyadicTime nxt = ctl->propose({t, y, DyadicTime::one(), horizon});
        const double err = first ? big : 0.0;
        first = false;
        const Verdict v = ctl->judge(t, nxt, err, 1, horizon);
        tr.events.push_back({t, nxt, err, v.error_scaled, v.accept});
        if (v.accept) {
            t = nxt;
            tr.accepted.push_back(t);
        } else {
            tr.rejected_times.push_back(nxt);
        }
    }
    return tr;
}

}  // namespace adaptsde
