#include "adaptsde/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include "adaptsde/brownian_tree.hpp"
#include "adaptsde/errors.hpp"
#include "adaptsde/harness.hpp"
#include "adaptsde/report.hpp"

namespace adaptsde {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument("malformed number '" + s + "' in " + what);
    }
}

}  // namespace

std::uint64_t parse_seed(std::string_view text) {
    const std::string s = trim(text);
    if (s.empty()) throw InvalidArgument("empty seed");
    const bool hex = s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X');
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(hex ? s.substr(2) : s, &pos, hex ? 16 : 10);
        if (pos != s.size() - (hex ? 2 : 0) || s[0] == '-') throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument("malformed seed '" + s + "'");
    }
}

std::pair<std::string, std::map<std::string, double>> parse_model_arg(std::string_view text) {
    const auto colon = text.find(':');
    std::pair<std::string, std::map<std::string, double>> r;
    r.first = trim(text.substr(0, colon));
    if (r.first.empty()) throw InvalidArgument("empty model name");
    if (colon == std::string_view::npos) return r;
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item = trim(rest.substr(0, comma));
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw InvalidArgument("model parameter '" + item + "' is not key=value");
        r.second[trim(item.substr(0, eq))] = parse_double(trim(item.substr(eq + 1)), "model parameters");
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return r;
}

std::vector<double> parse_number_list(std::string_view text) {
    std::vector<double> v;
    while (!text.empty()) {
        const auto comma = text.find(',');
        v.push_back(parse_double(trim(text.substr(0, comma)), "number list"));
        if (comma == std::string_view::npos) break;
        text = text.substr(comma + 1);
    }
    if (v.empty()) throw InvalidArgument("empty number list");
    return v;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
        kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return kv;
}

namespace {

struct RunConfig {
    // common
    std::string seed_text;
    std::size_t samples = 0;  // 0: subcommand default
    std::string out_path;
    bool check = false;
    int threads = 0;
    std::string config_path;
    bool full_scale = false;
    // convergence / audit
    std::string model = "sabr";
    std::string method = "heun";
    std::string controller = "constant";
    std::string grid;
    std::string reference = "auto";
    int fine_depth = 0;
    int checkpoints = 32;
    double expect_slope = 0.5;
    double slope_tol = 0.12;
    std::string gnuplot_path;
    // counterexample / dump
    double horizon = 1.0;
    int steps = 8;
    // moments
    int dim = 2;
    // local-error
    double h = std::ldexp(1.0, -8);
    int fine_levels = 8;
    // holder
    double alpha = 0.4;
    std::string depths = "2,3,4,5,6,7,8";
    int holder_fine_depth = 14;
    int pair_depth = 0;
    // bridge
    double bridge_h = 1.0;
    std::size_t nodes = 10000;
    // levy
    int fine_steps = 64;
    // bound
    double C = 0.01;
    std::string times = "0.5,1,2";
    // dump
    int depth = 4;
    int dump_dim = 1;
};

std::string registry_help() {
    std::ostringstream os;
    os << "Models:";
    for (const auto& m : model_registry()) {
        os << ' ' << m.name;
        char sep = ':';
        for (const auto& [k, v] : m.defaults) {
            os << sep << k << '=' << v;
            sep = ',';
        }
    }
    os << "\nMethods:";
    for (const auto& m : method_registry()) os << ' ' << m.name;
    os << "\nControllers:";
    for (const auto& c : controller_registry()) {
        os << "\n  " << c.kind;
        char sep = ':';
        for (const auto& [k, v] : c.defaults) {
            os << sep << k << '=' << v;
            sep = ',';
        }
    }
    os << "\nExit codes: 0 ok, 1 check failed, 2 usage, 3 runtime.\nDefault seed from $" << kSeedEnv << " (else 1).\n";
    return os.str();
}

void add_common(CLI::App* sub, RunConfig& c) {
    sub->add_option("--seed", c.seed_text, "Master seed, decimal or 0x-hex");
    sub->add_option("--samples", c.samples, "Monte Carlo sample count (0: default)");
    sub->add_option("--out", c.out_path, "CSV output path (default: stdout)");
    sub->add_flag("--check", c.check, "Exit 1 when the acceptance bracket fails");
    sub->add_option("--threads", c.threads, "Worker threads (0: hardware)")->check(CLI::NonNegativeNumber);
    sub->add_option("--config", c.config_path, "Flat key = value file; command-line values win");
    sub->add_flag("--full-scale", c.full_scale, "Use full-scale sample counts and references");
}

std::unique_ptr<CLI::App> build_app(RunConfig& c) {
    auto app = std::make_unique<CLI::App>("Adaptive SDE solvers on a Brownian tree, with convergence experiments.",
                                          "adaptsde");
    app->footer(registry_help());
    app->require_subcommand(1);

    auto* conv = app->add_subcommand("convergence", "Strong error against a fine coupled reference");
    add_common(conv, c);
    conv->add_option("--model", c.model, "Model name[:key=value,...]");
    conv->add_option("--method", c.method, "Stepper name");
    conv->add_option("--controller", c.controller, "Controller kind[:key=value,...]");
    conv->add_option("--grid", c.grid, "Comma-separated sweep values (h for constant, C otherwise)");
    conv->add_option("--reference", c.reference, "auto, fine, adaptive or exact")
        ->check(CLI::IsMember({"auto", "fine", "adaptive", "exact"}));
    conv->add_option("--fine-depth", c.fine_depth, "Fine constant reference at 2^-depth T (0: default)");
    conv->add_option("--checkpoints", c.checkpoints, "Number of uniform checkpoints (power of two)");
    conv->add_option("--expect-slope", c.expect_slope, "Rate checked by --check");
    conv->add_option("--slope-tol", c.slope_tol, "Tolerance on the rate");
    conv->add_option("--gnuplot", c.gnuplot_path, "Also write a gnuplot script plotting the CSV");

    auto* ce = app->add_subcommand("counterexample", "Bias of a step-skipping controller");
    add_common(ce, c);
    ce->add_option("--horizon", c.horizon, "Time horizon T");
    ce->add_option("--steps", c.steps, "Coarse intervals N (power of two)");

    auto* mo = app->add_subcommand("moments", "Expected |det| of a Gaussian matrix");
    add_common(mo, c);
    mo->add_option("--dim", c.dim, "Matrix size n");

    auto* le = app->add_subcommand("local-error", "One-step mean-square error coefficients");
    add_common(le, c);
    le->add_option("--step", c.h, "Step size h");
    le->add_option("--fine-levels", c.fine_levels, "Reference refinement depth");

    auto* ho = app->add_subcommand("holder", "Rough-path Holder distance of piecewise-linear approximations");
    add_common(ho, c);
    ho->add_option("--alpha", c.alpha, "Holder exponent in (1/3, 1/2)");
    ho->add_option("--depths", c.depths, "Comma-separated approximation depths");
    ho->add_option("--fine-depth", c.holder_fine_depth, "Depth of the proxy path");
    ho->add_option("--pair-depth", c.pair_depth, "Depth of the (s,t) grid (0: fine depth)");

    auto* br = app->add_subcommand("bridge", "Moments of the midpoint split and chaining exactness");
    add_common(br, c);
    br->add_option("--length", c.bridge_h, "Root interval length");
    br->add_option("--nodes", c.nodes, "Random nodes for the chaining check");

    auto* lv = app->add_subcommand("levy", "Regression of iterated integrals on (W, H)");
    add_common(lv, c);
    lv->add_option("--fine-steps", c.fine_steps, "Random-walk steps of the oracle path");

    auto* bd = app->add_subcommand("bound", "Expected previsible step against its lower bound");
    add_common(bd, c);
    bd->add_option("--C", c.C, "Controller constant");
    bd->add_option("--times", c.times, "Comma-separated times");

    auto* au = app->add_subcommand("audit", "No-skip audit of adaptive controllers on SABR");
    add_common(au, c);
    au->add_option("--controller", c.controller, "Controller kind[:key=value,...]");

    auto* du = app->add_subcommand("dump", "Write every tree node down to a depth as CSV");
    add_common(du, c);
    du->add_option("--depth", c.depth, "Tree depth");
    du->add_option("--dim", c.dump_dim, "Brownian dimension");
    du->add_option("--horizon", c.horizon, "Time horizon T");
    return app;
}

/// CSV sink: the --out file, or the summary stream when no path is given.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
        if (!path.empty() && path != "-") {
            file_.open(path, std::ios::binary | std::ios::trunc);
            if (!file_) throw Error("cannot open '" + path + "' for writing");
            os_ = &file_;
        }
    }
    std::ostream& os() { return *os_; }
    void close() {
        if (file_.is_open()) {
            file_.close();
            if (!file_) throw Error("write failed");
        }
    }

private:
    std::ofstream file_;
    std::ostream* os_;
};

std::uint64_t resolve_seed(const RunConfig& c) {
    if (!c.seed_text.empty()) return parse_seed(c.seed_text);
    if (const char* env = std::getenv(kSeedEnv); env && *env) return parse_seed(env);
    return 1;
}

std::size_t samples_or(const RunConfig& c, std::size_t desk, std::size_t full) {
    if (c.samples > 0) return c.samples;
    return c.full_scale ? full : desk;
}

std::string pm(const Estimate& e) { return format_number(e.mean) + " +- " + format_number(e.std_err); }

int finish(bool pass, const RunConfig& c, Summary& s, std::ostream& out) {
    s.add("pass", pass);
    s.write(out);
    return c.check && !pass ? kExitCheckFailed : kExitOk;
}

int cmd_convergence(const RunConfig& c, std::ostream& out, std::ostream& err) {
    StrongErrorConfig cfg;
    auto [mname, mparams] = parse_model_arg(c.model);
    cfg.model = make_model(mname, mparams);
    cfg.method = parse_method(c.method);
    cfg.controller = parse_controller_spec(c.controller);
    const double T = cfg.model.horizon;
    if (!c.grid.empty()) {
        cfg.grid = parse_number_list(c.grid);
    } else if (cfg.controller.kind == "constant") {
        for (int k = 4; k <= 9; ++k) cfg.grid.push_back(std::ldexp(T, -k));
    } else {
        double base = 1.0;
        for (const auto& ci : controller_registry())
            if (ci.kind == cfg.controller.kind) base = ci.sweep_base;
        for (int k = 1; k <= 6; ++k) cfg.grid.push_back(std::ldexp(base, -k));
    }
    std::string ref = c.reference;
    if (ref == "auto") ref = cfg.controller.kind == "constant" ? "fine" : "adaptive";
    cfg.reference = ref == "fine" ? ReferenceKind::FineConstant
                    : ref == "exact" ? ReferenceKind::Exact
                                     : ReferenceKind::FineAdaptive;
    cfg.fine_depth = c.fine_depth > 0 ? c.fine_depth : (c.full_scale ? 14 : 12);
    cfg.checkpoints = c.checkpoints;
    cfg.samples = samples_or(c, 2000, 100000);
    cfg.seed = resolve_seed(c);
    cfg.threads = c.threads;
    const StrongErrorReport rep = strong_error(cfg);

    Sink sink(c.out_path, out);
    write_csv(sink.os(), strong_error_rows(rep));
    sink.close();
    if (!c.gnuplot_path.empty()) {
        std::ofstream g(c.gnuplot_path, std::ios::trunc);
        if (!g) throw Error("cannot open '" + c.gnuplot_path + "' for writing");
        const char* xcol = cfg.controller.kind == "constant" ? "5" : "7";
        g << "set datafile separator ','\nset logscale xy\nset key off\n"
          << "set xlabel '" << (cfg.controller.kind == "constant" ? "h" : "evaluations") << "'\nset ylabel 'strong error'\n"
          << "plot '" << (c.out_path.empty() ? "data.csv" : c.out_path) << "' every ::1 using " << xcol
          << ":8:9 with yerrorlines\n";
    }
    err << rep.method << " / " << rep.controller << " on " << rep.model << ": rate " << format_number(rep.rate)
        << " (expected " << format_number(c.expect_slope) << " +- " << format_number(c.slope_tol) << ")\n";
    Summary s;
    s.add("experiment", std::string("convergence"));
    s.add("model", rep.model);
    s.add("method", rep.method);
    s.add("controller", rep.controller);
    s.add("reference", rep.reference);
    s.add("samples_requested", static_cast<double>(rep.samples_requested));
    s.add("samples_used", static_cast<double>(rep.samples_used));
    s.add("samples_flagged", static_cast<double>(rep.samples_flagged));
    s.add("rate", rep.rate);
    s.add("intercept", rep.fit.intercept);
    s.add("r2", rep.fit.r2);
    s.add("expected_rate", c.expect_slope);
    const bool pass = std::isfinite(rep.rate) && std::fabs(rep.rate - c.expect_slope) <= c.slope_tol;
    return finish(pass, c, s, out);
}

int cmd_counterexample(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::size_t M = samples_or(c, 200000, 200000);
    const CounterexampleReport r = counterexample_experiment(c.horizon, c.steps, M, resolve_seed(c), c.threads);
    const double target = c.horizon / 8.0;
    Sink sink(c.out_path, out);
    write_csv(sink.os(), {{"counterexample", "counterexample", "heun", "skipping-max", c.horizon, M, 0.0,
                           r.skipping.mean, r.skipping.std_err, 0.0},
                          {"counterexample", "counterexample", "heun", "no-skip", c.horizon, M, 0.0, r.no_skip.mean,
                           r.no_skip.std_err, 0.0}});
    sink.close();
    err << "skipping: " << pm(r.skipping) << " vs target " << format_number(target) << "; no-skip: " << pm(r.no_skip)
        << " vs target 0\n";
    Summary s;
    s.add("experiment", std::string("counterexample"));
    s.add("target", target);
    s.add("skipping_mean", r.skipping.mean);
    s.add("skipping_stderr", r.skipping.std_err);
    s.add("noskip_target", 0.0);
    s.add("noskip_mean", r.no_skip.mean);
    s.add("noskip_stderr", r.no_skip.std_err);
    s.add("one_step_fraction", r.one_step_fraction);
    return finish(r.skipping.within(target) && r.no_skip.within(0.0), c, s, out);
}

int cmd_moments(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::size_t M = samples_or(c, 1000000, 1000000);
    const Estimate e = gaussian_determinant_mc(c.dim, M, resolve_seed(c), c.threads);
    const double target = gaussian_abs_moment(c.dim);
    Sink sink(c.out_path, out);
    write_csv(sink.os(), {{"moments", "gaussian", "det", "none", static_cast<double>(c.dim), M, 0.0, e.mean,
                           e.std_err, 0.0}});
    sink.close();
    err << "E|det| (n=" << c.dim << "): " << pm(e) << " vs target " << format_number(target) << '\n';
    Summary s;
    s.add("experiment", std::string("moments"));
    s.add("n", static_cast<double>(c.dim));
    s.add("samples", static_cast<double>(M));
    s.add("target", target);
    s.add("mean", e.mean);
    s.add("stderr", e.std_err);
    return finish(e.within(target), c, s, out);
}

int cmd_local_error(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::size_t M = samples_or(c, 100000, 100000);
    const LocalMseReport r = local_mse_ratio(c.h, M, resolve_seed(c), c.threads, c.fine_levels);
    Sink sink(c.out_path, out);
    write_csv(sink.os(), {{"local-error", "counterexample", "heun-1", "none", c.h, M, 2.0, r.heun1.mean,
                           r.heun1.std_err, 0.0},
                          {"local-error", "counterexample", "heun-2", "none", c.h, M, 4.0, r.heun2.mean,
                           r.heun2.std_err, 0.0},
                          {"local-error", "counterexample", "spark", "none", c.h, M, 3.0, r.spark.mean,
                           r.spark.std_err, 0.0}});
    sink.close();
    err << "heun-2/heun-1: " << pm(r.ratio_heun2_heun1) << " vs target 1/2; spark/heun-1: "
        << pm(r.ratio_spark_heun1) << " vs target 1/3\n";
    Summary s;
    s.add("experiment", std::string("local-error"));
    s.add("h", c.h);
    s.add("ratio_heun2_heun1", r.ratio_heun2_heun1.mean);
    s.add("ratio_heun2_heun1_stderr", r.ratio_heun2_heun1.std_err);
    s.add("ratio_heun2_heun1_target", 0.5);
    s.add("ratio_spark_heun1", r.ratio_spark_heun1.mean);
    s.add("ratio_spark_heun1_stderr", r.ratio_spark_heun1.std_err);
    s.add("ratio_spark_heun1_target", 1.0 / 3.0);
    const bool pass = std::fabs(r.ratio_heun2_heun1.mean - 0.5) <= 0.05 &&
                      std::fabs(r.ratio_spark_heun1.mean - 1.0 / 3.0) <= 0.05;
    return finish(pass, c, s, out);
}

int cmd_holder(const RunConfig& c, std::ostream& out, std::ostream& err) {
    HolderConfig cfg;
    cfg.alpha = c.alpha;
    cfg.depths.clear();
    for (double d : parse_number_list(c.depths)) {
        if (d != std::floor(d)) throw InvalidArgument("depths must be integers");
        cfg.depths.push_back(static_cast<int>(d));
    }
    cfg.fine_depth = c.holder_fine_depth;
    cfg.pair_depth = c.pair_depth;
    cfg.seeds = static_cast<int>(samples_or(c, 50, 50));
    cfg.seed = resolve_seed(c);
    cfg.threads = c.threads;
    const HolderReport r = holder_decay(cfg);
    std::vector<CsvRow> rows;
    for (std::size_t k = 0; k < r.depths.size(); ++k) {
        MomentSums m1, m2;
        for (std::size_t s = 0; s < r.level1_by_seed.size(); ++s) {
            m1.add(r.level1_by_seed[s][k]);
            m2.add(r.level2_by_seed[s][k]);
        }
        rows.push_back({"holder", "brownian", "level1", "none", static_cast<double>(r.depths[k]),
                        r.level1_by_seed.size(), 0.0, r.level1[k], m1.estimate().std_err, 0.0});
        rows.push_back({"holder", "brownian", "level2", "none", static_cast<double>(r.depths[k]),
                        r.level2_by_seed.size(), 0.0, r.level2[k], m2.estimate().std_err, 0.0});
    }
    Sink sink(c.out_path, out);
    write_csv(sink.os(), rows);
    sink.close();
    err << "level 1: " << format_number(r.level1.front()) << " -> " << format_number(r.level1.back())
        << "; level 2: " << format_number(r.level2.front()) << " -> " << format_number(r.level2.back())
        << " (target: last <= first / 2)\n";
    Summary s;
    s.add("experiment", std::string("holder"));
    s.add("level1_first", r.level1.front());
    s.add("level1_last", r.level1.back());
    s.add("level2_first", r.level2.front());
    s.add("level2_last", r.level2.back());
    s.add("monotone_fraction", r.monotone_fraction);
    return finish(r.halved(), c, s, out);
}

int cmd_bridge(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::size_t M = samples_or(c, 100000, 100000);
    const double h = c.bridge_h;
    const std::uint64_t seed = resolve_seed(c);
    const MomentReport r = bridge_moment_tests(M, seed, h, c.threads);
    const double ulps = chain_exactness_ulps(c.nodes, seed);
    std::vector<CsvRow> rows;
    for (const auto& k : r.checks) rows.push_back({"bridge", k.name, "split", "none", k.target, M, 0.0, k.estimate, k.std_err, 0.0});
    Sink sink(c.out_path, out);
    write_csv(sink.os(), rows);
    sink.close();
    Summary s;
    s.add("experiment", std::string("bridge"));
    std::size_t failed = 0;
    for (const auto& k : r.checks)
        if (!k.pass) {
            ++failed;
            err << "moment check failed: " << k.name << " = " << format_number(k.estimate) << " +- "
                << format_number(k.std_err) << " vs " << format_number(k.target) << '\n';
        }
    s.add("checks", static_cast<double>(r.checks.size()));
    s.add("failed", static_cast<double>(failed));
    s.add("chain_ulps", ulps);
    return finish(r.all_pass() && ulps <= 8.0, c, s, out);
}

int cmd_levy(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::size_t M = samples_or(c, 1000000, 1000000);
    const LevyRegressionReport r = levy_regression(M, resolve_seed(c), c.fine_steps, c.threads);
    const double t3[3] = {0.5, 1.0, -1.0};
    const char* n3[3] = {"W1W2", "H1W2", "W1H2"};
    std::vector<CsvRow> rows;
    bool pass = true;
    for (int i = 0; i < 3; ++i) {
        rows.push_back({"levy", "i12", n3[i], "none", t3[i], M, 0.0, r.i12.coef[i], r.i12.std_err[i], 0.0});
        pass = pass && std::fabs(r.i12.coef[i] - t3[i]) <= 0.02;
    }
    for (int i = 0; i < 3; ++i) {
        rows.push_back({"levy", "i21", n3[i], "none", t3[i], M, 0.0, r.i21.coef[i], r.i21.std_err[i], 0.0});
        pass = pass && std::fabs(r.i21.coef[i] - t3[i]) <= 0.02;
    }
    for (int i = 0; i < 2; ++i) {
        rows.push_back({"levy", "combined", i == 0 ? "half-W1W2" : "H1W2-W1H2", "none", 1.0, M, 0.0,
                        r.combined.coef[i], r.combined.std_err[i], 0.0});
        pass = pass && std::fabs(r.combined.coef[i] - 1.0) <= 0.02;
    }
    Sink sink(c.out_path, out);
    write_csv(sink.os(), rows);
    sink.close();
    err << "combined coefficients: " << format_number(r.combined.coef[0]) << ", " << format_number(r.combined.coef[1])
        << " vs target 1, 1\n";
    Summary s;
    s.add("experiment", std::string("levy"));
    s.add("coef_half_w1w2", r.combined.coef[0]);
    s.add("coef_area", r.combined.coef[1]);
    s.add("coef_w1w2", r.i12.coef[0]);
    s.add("coef_h1w2", r.i12.coef[1]);
    s.add("coef_w1h2", r.i12.coef[2]);
    return finish(pass, c, s, out);
}

int cmd_bound(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::size_t M = samples_or(c, 100000, 100000);
    const auto rows_in = previsible_bound_check(c.C, parse_number_list(c.times), M, resolve_seed(c), c.threads);
    std::vector<CsvRow> rows;
    bool pass = true;
    for (const auto& r : rows_in) {
        rows.push_back({"bound", "sabr", "previsible", "none", r.t, M, r.bound, r.mean_step.mean, r.mean_step.std_err, 0.0});
        pass = pass && r.pass;
        err << "t=" << format_number(r.t) << ": " << pm(r.mean_step) << " vs bound " << format_number(r.bound) << '\n';
    }
    Sink sink(c.out_path, out);
    write_csv(sink.os(), rows);
    sink.close();
    Summary s;
    s.add("experiment", std::string("bound"));
    s.add("C", c.C);
    return finish(pass, c, s, out);
}

int cmd_audit(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const std::size_t runs = samples_or(c, 100, 100);
    const ControllerSpec spec = parse_controller_spec(c.controller == "constant" ? "halving" : c.controller);
    const AuditSummary a = audit_sabr_runs(spec, runs, resolve_seed(c));
    PiParams unclipped;
    unclipped.clip_rejected = false;
    const bool adversarial_caught = !no_skip_audit(adversarial_pi_trace(unclipped)).ok();
    Sink sink(c.out_path, out);
    write_csv(sink.os(), {{"audit", "sabr", "heun", spec.str(), 0.0, a.runs, 0.0,
                           static_cast<double>(a.runs - a.passed), 0.0, 0.0}});
    sink.close();
    for (const auto& v : a.first_violations) err << "violation: " << v << '\n';
    Summary s;
    s.add("experiment", std::string("audit"));
    s.add("controller", spec.str());
    s.add("runs", static_cast<double>(a.runs));
    s.add("passed", static_cast<double>(a.passed));
    s.add("unclipped_pi_caught", adversarial_caught);
    return finish(a.passed == a.runs && adversarial_caught, c, s, out);
}

int cmd_dump(const RunConfig& c, std::ostream& out) {
    BrownianTree tree(resolve_seed(c), c.dump_dim, c.horizon);
    Sink sink(c.out_path, out);
    tree.dump_csv(sink.os(), c.depth);
    sink.close();
    return kExitOk;
}

/// Arguments for config entries whose options were not given on the command line.
std::vector<std::string> config_arguments(CLI::App* sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot read config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    std::vector<std::string> extra;
    for (const auto& [key, value] : parse_config_text(buf.str())) {
        if (key == "config") throw InvalidArgument("config files cannot include other config files");
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (!opt) throw InvalidArgument("unknown config key '" + key + "' for " + sub->get_name());
        if (opt->count() == 0) extra.push_back("--" + key + "=" + value);
    }
    return extra;
}

int dispatch(const std::string& name, const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (name == "convergence") return cmd_convergence(c, out, err);
    if (name == "counterexample") return cmd_counterexample(c, out, err);
    if (name == "moments") return cmd_moments(c, out, err);
    if (name == "local-error") return cmd_local_error(c, out, err);
    if (name == "holder") return cmd_holder(c, out, err);
    if (name == "bridge") return cmd_bridge(c, out, err);
    if (name == "levy") return cmd_levy(c, out, err);
    if (name == "bound") return cmd_bound(c, out, err);
    if (name == "audit") return cmd_audit(c, out, err);
    if (name == "dump") return cmd_dump(c, out);
    throw InvalidArgument("unknown subcommand " + name);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv, argv + argc);
    if (args.empty()) args.emplace_back("adaptsde");
    std::unique_ptr<CLI::App> app;
    auto parse = [&](RunConfig& c, const std::vector<std::string>& a) {
        app = build_app(c);
        std::vector<const char*> ptrs;
        for (const auto& s : a) ptrs.push_back(s.c_str());
        app->parse(static_cast<int>(ptrs.size()), ptrs.data());
    };
    try {
        RunConfig c;
        try {
            parse(c, args);
            CLI::App* sub = app->get_subcommands().front();
            if (!c.config_path.empty()) {
                const std::vector<std::string> extra = config_arguments(sub, c.config_path);
                const auto pos = std::find(args.begin() + 1, args.end(), sub->get_name());
                std::vector<std::string> merged(args.begin(), pos + 1);
                merged.insert(merged.end(), extra.begin(), extra.end());
                merged.insert(merged.end(), pos + 1, args.end());
                c = RunConfig{};
                parse(c, merged);
                sub = app->get_subcommands().front();
            }
            return dispatch(sub->get_name(), c, out, err);
        } catch (const CLI::ParseError& e) {
            const int code = app->exit(e, out, err);
            return code == 0 ? kExitOk : kExitUsage;
        }
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace adaptsde
