#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adaptsde/cli.hpp"
#include "adaptsde/errors.hpp"
#include "adaptsde/report.hpp"

using namespace adaptsde;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "adaptsde");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string value_of(const std::string& summary, const std::string& key) {
    for (const auto& [k, v] : parse_summary(summary))
        if (k == key) return v;
    return {};
}

}  // namespace

TEST_CASE("seed parsing") {
    CHECK(parse_seed("42") == 42);
    CHECK(parse_seed("0x2a") == 42);
    CHECK(parse_seed("0XFFFFFFFFFFFFFFFF") == 0xffffffffffffffffull);
    CHECK_THROWS_AS(parse_seed(""), InvalidArgument);
    CHECK_THROWS_AS(parse_seed("12abc"), InvalidArgument);
    CHECK_THROWS_AS(parse_seed("-3"), InvalidArgument);
    CHECK_THROWS_AS(parse_seed("0x"), InvalidArgument);
}

TEST_CASE("argument grammars") {
    auto [name, p] = parse_model_arg("gbm:mu=0.1, sigma=0.3");
    CHECK(name == "gbm");
    CHECK(p.at("mu") == 0.1);
    CHECK(p.at("sigma") == 0.3);
    CHECK(parse_model_arg("sabr").second.empty());
    CHECK_THROWS_AS(parse_model_arg("gbm:mu"), InvalidArgument);
    CHECK_THROWS_AS(parse_model_arg("gbm:mu=x"), InvalidArgument);

    CHECK(parse_number_list("1, 0.5,0.25") == std::vector<double>{1, 0.5, 0.25});
    CHECK_THROWS_AS(parse_number_list("1,,2"), InvalidArgument);

    const auto kv = parse_config_text("# comment\nsamples = 10\n\nmodel=gbm:mu=0.1  # trailing\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"samples", "10"});
    CHECK(kv[1] == std::pair<std::string, std::string>{"model", "gbm:mu=0.1"});
    CHECK_THROWS_AS(parse_config_text("novalue\n"), InvalidArgument);
}

TEST_CASE("csv and summary formatting") {
    CHECK(format_number(0.1) == "0.10000000000000001");
    CHECK(format_number(std::nan("")) == "nan");
    CHECK(format_number(-1.0 / 0.0) == "-inf");
    std::ostringstream os;
    write_csv(os, {{"e", "a,b", "m", "c\"x", 0.5, 3, 1.0, 2.0, 0.1, 0.5}});
    CHECK(os.str() ==
          "experiment,model,method,controller,param,samples,avg_evals,error,stderr,slope\n"
          "e,\"a,b\",m,\"c\"\"x\",0.5,3,1,2,0.10000000000000001,0.5\n");
    Summary s;
    s.add("x", 1.5);
    s.add("ok", true);
    s.add("name", std::string("heun"));
    std::ostringstream so;
    s.write(so);
    CHECK(so.str() == "x=1.5\nok=true\nname=heun\n");
    CHECK(parse_summary(so.str()).size() == 3);
}

TEST_CASE("exit codes") {
    CHECK(cli({"--help"}).code == kExitOk);
    const auto h = cli({"--help"});
    for (const char* name : {"sabr", "counterexample", "gbm", "ou", "euler", "milstein", "heun", "spark",
                             "ito-heun-rand", "constant", "halving", "previsible", "pi"})
        CHECK(h.out.find(name) != std::string::npos);
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"convergence", "--method", "rk4"}).code == kExitUsage);
    CHECK(cli({"convergence", "--model", "heston"}).code == kExitUsage);
    CHECK(cli({"convergence", "--controller", "pi:zz=1"}).code == kExitUsage);
    CHECK(cli({"moments", "--seed", "zz"}).code == kExitUsage);
    CHECK(cli({"moments", "--bogus"}).code == kExitUsage);
    // Zero tolerance never accepts a step: runtime failure.
    CHECK(cli({"convergence", "--model", "gbm", "--method", "heun", "--controller", "halving", "--grid", "0",
               "--samples", "2"})
              .code == kExitRuntime);
}

TEST_CASE("check mode gates the exit code") {
    const auto ok = cli({"moments", "--samples", "20000", "--check"});
    CHECK(ok.code == kExitOk);
    CHECK(value_of(ok.out, "pass") == "true");
    CHECK(std::stod(value_of(ok.out, "target")) == doctest::Approx(1.0).epsilon(1e-15));
    // An impossible expected slope must fail only under --check.
    const std::vector<std::string> conv{"convergence", "--model", "gbm", "--method", "euler", "--reference", "exact",
                                        "--samples", "50", "--grid", "0.125,0.0625,0.03125", "--expect-slope", "3"};
    CHECK(cli(conv).code == kExitOk);
    auto with_check = conv;
    with_check.push_back("--check");
    CHECK(cli(with_check).code == kExitCheckFailed);
}

TEST_CASE("same seed gives byte-identical csv for any thread count") {
    const std::string a = "cli_det_a.csv", b = "cli_det_b.csv", c = "cli_det_c.csv";
    const std::vector<std::string> base{"convergence", "--model", "sabr", "--method", "heun", "--controller", "pi",
                                        "--grid", "0.4,0.2,0.1", "--samples", "24", "--seed", "7"};
    auto run = [&](const std::string& path, const std::string& threads) {
        auto args = base;
        args.insert(args.end(), {"--out", path, "--threads", threads});
        return cli(args).code;
    };
    REQUIRE(run(a, "1") == kExitOk);
    REQUIRE(run(b, "1") == kExitOk);
    REQUIRE(run(c, "3") == kExitOk);
    const std::string ca = read_file(a);
    CHECK(ca.size() > 100);
    CHECK(ca == read_file(b));
    CHECK(ca == read_file(c));
    std::remove(a.c_str());
    std::remove(b.c_str());
    std::remove(c.c_str());
}

TEST_CASE("config file with command-line precedence") {
    const std::string cfg = "cli_test.cfg";
    {
        std::ofstream f(cfg);
        f << "# moments run\nsamples = 3000\ndim = 3\nseed = 0x10\n";
    }
    auto r = cli({"moments", "--config", cfg});
    REQUIRE(r.code == kExitOk);
    CHECK(value_of(r.out, "samples") == "3000");
    CHECK(value_of(r.out, "n") == "3");
    r = cli({"moments", "--config", cfg, "--dim", "2"});
    CHECK(value_of(r.out, "n") == "2");
    CHECK(value_of(r.out, "samples") == "3000");

    {
        std::ofstream f(cfg);
        f << "smaples = 3\n";
    }
    CHECK(cli({"moments", "--config", cfg}).code == kExitUsage);
    CHECK(cli({"moments", "--config", "does-not-exist.cfg"}).code == kExitUsage);
    std::remove(cfg.c_str());
}

TEST_CASE("seed from the environment") {
    setenv(kSeedEnv, "5", 1);
    const auto a = cli({"moments", "--samples", "100"});
    const auto b = cli({"moments", "--samples", "100", "--seed", "5"});
    const auto c = cli({"moments", "--samples", "100", "--seed", "6"});
    unsetenv(kSeedEnv);
    CHECK(value_of(a.out, "mean") == value_of(b.out, "mean"));
    CHECK(value_of(a.out, "mean") != value_of(c.out, "mean"));
}

TEST_CASE("dump writes the tree") {
    const auto r = cli({"dump", "--depth", "2", "--dim", "1", "--seed", "3"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.rfind("depth,index,W_1,H_1\n0,0,", 0) == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 8);
}
