#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loja/csv.hpp"
#include "loja/experiment.hpp"

using namespace loja;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("loja_test_" + tag);
    std::error_code ec;
    fs::remove_all(p, ec);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& body) {
    const fs::path p = dir / name;
    std::ofstream os(p);
    os << body;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSmallSgd = R"({
  "kind": "sgd", "name": "small", "seed": 7, "repetitions": 3,
  "oracle": "quadratic", "theta0": [1.0],
  "schedule": {"kind": "power_law", "a": 0.8, "c": 0.2, "r": 1.4},
  "noise": {"kind": "iid_gaussian", "sigma": 0.3},
  "max_iters": 20000,
  "rates": {"mu": 2.0, "r": 1.4, "fhat": 0.0}
})";

}  // namespace

TEST_CASE("malformed config: missing field reported by path") {
    const auto dir = fresh_dir("badcfg");
    const auto cfg = write_config(dir, "bad.json", R"({
      "kind": "sgd", "name": "bad", "oracle": "quadratic", "theta0": [1.0],
      "schedule": {"kind": "power_law", "c": 0.2, "r": 1.4},
      "noise": {"kind": "none"}, "max_iters": 100
    })");
    auto res = run_experiment(cfg, dir / "out");
    CHECK_FALSE(res.ok);
    CHECK(res.error.find("schedule.a") != std::string::npos);
    // partial outputs removed
    CHECK_FALSE(fs::exists(dir / "out" / "bad" / "trajectory_rep0.csv"));
}

TEST_CASE("repetitions produce one file per derived seed, all distinct") {
    const auto dir = fresh_dir("reps");
    const auto cfg = write_config(dir, "small.json", kSmallSgd);
    auto res = run_experiment(cfg, dir / "out");
    REQUIRE(res.ok);
    const fs::path base = dir / "out" / "small";
    REQUIRE(fs::exists(base / "trajectory_rep0.csv"));
    REQUIRE(fs::exists(base / "trajectory_rep1.csv"));
    REQUIRE(fs::exists(base / "trajectory_rep2.csv"));
    const std::string a = slurp(base / "trajectory_rep0.csv");
    const std::string b = slurp(base / "trajectory_rep1.csv");
    const std::string c = slurp(base / "trajectory_rep2.csv");
    CHECK(a != b);
    CHECK(b != c);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    const auto dir = fresh_dir("repeat");
    const auto cfg = write_config(dir, "small.json", kSmallSgd);
    auto r1 = run_experiment(cfg, dir / "out1");
    auto r2 = run_experiment(cfg, dir / "out2");
    REQUIRE(r1.ok);
    REQUIRE(r2.ok);
    for (const char* f : {"trajectory_rep0.csv", "rates.csv", "summary.txt"}) {
        CHECK(slurp(dir / "out1" / "small" / f) == slurp(dir / "out2" / "small" / f));
    }
}

TEST_CASE("jobs > 1 gives the same bytes as sequential execution") {
    const auto dir = fresh_dir("jobs");
    const auto cfg = write_config(dir, "small.json", kSmallSgd);
    auto r1 = run_experiment(cfg, dir / "out1", {}, 1);
    auto r2 = run_experiment(cfg, dir / "out2", {}, 3);
    REQUIRE(r1.ok);
    REQUIRE(r2.ok);
    for (int k = 0; k < 3; ++k) {
        const std::string f = "trajectory_rep" + std::to_string(k) + ".csv";
        CHECK(slurp(dir / "out1" / "small" / f) == slurp(dir / "out2" / "small" / f));
    }
}

TEST_CASE("trajectory csv round trip") {
    auto suite = builtin_suite();
    const auto& quad = find_oracle(suite, "quadratic");
    auto sched = StepSchedule::power_law(0.8, 0.2, 1.4);
    auto noise = NoiseProcess::iid_gaussian(1, 0.2, 5);
    RunOptions opts;
    opts.theta0 = {1.0};
    opts.max_iters = 5000;
    opts.record_theta = true;
    auto traj = run(quad, sched, noise, opts);

    std::stringstream ss;
    write_trajectory_csv(ss, traj);
    auto back = read_trajectory_csv(ss);
    REQUIRE(back.points.size() == traj.points.size());
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        CHECK(back.points[i].n == traj.points[i].n);
        CHECK(back.points[i].gamma == traj.points[i].gamma);  // %.17g round-trips
        CHECK(back.points[i].f == traj.points[i].f);
        CHECK(back.thetas[i] == traj.thetas[i]);
    }
    CHECK(back.status == traj.status);
}

TEST_CASE("plot data: empty trajectory and synthetic power law") {
    Trajectory empty;
    empty.dim = 1;
    LogLogFit nofit;
    std::stringstream ss;
    const std::size_t dropped = write_plotdata(ss, empty, RateQuantity::f_gap, 0.0, nofit);
    CHECK(dropped == 0);
    CHECK(ss.str().find("log_gamma") != std::string::npos);  // header only plus footer

    Trajectory t;
    t.dim = 1;
    for (int i = 0; i < 100; ++i) {
        const double g = std::pow(10.0, i / 33.0);
        t.points.push_back({static_cast<std::size_t>(i), g, 7.0 * std::pow(g, -1.5), 0.0});
    }
    t.points[3].f = 0.0;  // one dropped row
    const double g_end = t.points.back().gamma;
    auto fit = fit_loglog(t, RateQuantity::f_gap, 0.0, nullptr, {g_end / 1000.0, g_end}, 1.5);
    std::stringstream ps;
    const std::size_t d2 = write_plotdata(ps, t, RateQuantity::f_gap, 0.0, fit);
    CHECK(d2 == 1);
    // fitted column reproduces the fit line: spot-check one row
    std::string header, row;
    std::getline(ps, header);
    std::getline(ps, row);
    std::stringstream rs(row);
    std::string lg, lv, fitcol;
    std::getline(rs, lg, ',');
    std::getline(rs, lv, ',');
    std::getline(rs, fitcol, ',');
    CHECK(std::stod(fitcol) ==
          Catch::Approx(fit.intercept + fit.slope * std::stod(lg)).margin(1e-12));
    // span of log gamma covers at least one decade
    CHECK(std::log10(t.points.back().gamma / t.points[1].gamma) >= 1.0);
}

TEST_CASE("shipped config: summary carries the fitted slope and verdict") {
    const char* configs = std::getenv("LOJA_CONFIGS");
    if (!configs) {
        WARN("LOJA_CONFIGS not set; skipping shipped-config check");
        return;
    }
    const auto dir = fresh_dir("shipped");
    auto res = run_experiment(fs::path(configs) / "quartic_noiseless.json", dir);
    REQUIRE(res.ok);
    CHECK(res.failed_expectations.empty());
    const std::string summary = slurp(dir / "quartic_noiseless" / "summary.txt");
    CHECK(summary.find("slope") != std::string::npos);
    CHECK(summary.find("consistent") != std::string::npos);
    // plot data spans at least a decade of the clock
    const std::string plot = slurp(dir / "quartic_noiseless" / "plot_f_gap_rep0.csv");
    std::stringstream ps(plot);
    std::string line;
    std::getline(ps, line);  // header
    double first = 0.0, last = 0.0;
    bool have_first = false;
    while (std::getline(ps, line)) {
        if (line.empty() || line[0] == '#') continue;
        const double lg = std::stod(line.substr(0, line.find(',')));
        if (!have_first && std::isfinite(lg)) {
            first = lg;
            have_first = true;
        }
        last = lg;
    }
    CHECK(last - first >= std::log(10.0));
}

TEST_CASE("cli binary: run, rates, validate-schedule, malformed config") {
    const char* cli = std::getenv("LOJA_CLI");
    if (!cli) {
        WARN("LOJA_CLI not set; skipping binary-level checks");
        return;
    }
    const auto dir = fresh_dir("bin");
    const auto cfg = write_config(dir, "small.json", kSmallSgd);

    auto shell = [](const std::string& cmd) { return std::system(cmd.c_str()); };

    SECTION("run + rates") {
        const std::string out = (dir / "out").string();
        REQUIRE(shell(std::string(cli) + " run " + cfg.string() + " --out " + out + " > " +
                      (dir / "run.log").string() + " 2>&1") == 0);
        const fs::path traj = dir / "out" / "small" / "trajectory_rep0.csv";
        REQUIRE(fs::exists(traj));
        CHECK(shell(std::string(cli) + " rates " + traj.string() +
                    " --mu 2 --r 1.4 --fhat 0 > " + (dir / "rates.log").string()) == 0);
        const std::string log = slurp(dir / "rates.log");
        CHECK(log.find("f_gap") != std::string::npos);
    }

    SECTION("validate-schedule exit codes") {
        CHECK(shell(std::string(cli) + " validate-schedule --a 0.8 --r 1.4 > /dev/null") == 0);
        CHECK(shell(std::string(cli) + " validate-schedule --a 0.7 --r 1.4 > /dev/null") != 0);
    }

    SECTION("malformed config names the field and exits nonzero") {
        const auto bad = write_config(dir, "bad.json", R"({
          "kind": "sgd", "name": "bad2", "oracle": "quadratic", "theta0": [1.0],
          "schedule": {"kind": "power_law", "c": 0.2, "r": 1.4},
          "noise": {"kind": "none"}, "max_iters": 100
        })");
        const std::string log = (dir / "bad.log").string();
        CHECK(shell(std::string(cli) + " run " + bad.string() + " --out " + (dir / "o").string() +
                    " > " + log + " 2>&1") != 0);
        CHECK(slurp(log).find("schedule.a") != std::string::npos);
    }

    SECTION("LOJA_OUT supplies the output root when --out is absent") {
        const fs::path envout = dir / "envout";
        REQUIRE(shell("LOJA_OUT=" + envout.string() + " " + cli + " run " + cfg.string() + " > " +
                      (dir / "env.log").string() + " 2>&1") == 0);
        CHECK(fs::exists(envout / "small" / "trajectory_rep0.csv"));
    }
}
