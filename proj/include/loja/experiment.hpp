#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "loja/arma.hpp"
#include "loja/csv.hpp"
#include "loja/engine.hpp"
#include "loja/mlp.hpp"
#include "loja/noise.hpp"
#include "loja/objectives.hpp"
#include "loja/rates.hpp"
#include "loja/schedule.hpp"

namespace loja {

namespace fs = std::filesystem;
using nlohmann::json;

/// Config validation failure; the message names the offending field path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cfg {

inline const json& need(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError("missing required field: " + (path.empty() ? key : path + "." + key));
    return j.at(key);
}

inline double need_num(const json& j, const std::string& key, const std::string& path) {
    const json& v = need(j, key, path);
    if (!v.is_number())
        throw ConfigError("field is not a number: " + (path.empty() ? key : path + "." + key));
    return v.get<double>();
}

inline std::string need_str(const json& j, const std::string& key, const std::string& path) {
    const json& v = need(j, key, path);
    if (!v.is_string())
        throw ConfigError("field is not a string: " + (path.empty() ? key : path + "." + key));
    return v.get<std::string>();
}

inline Vec need_vec(const json& j, const std::string& key, const std::string& path) {
    const json& v = need(j, key, path);
    if (!v.is_array())
        throw ConfigError("field is not an array: " + (path.empty() ? key : path + "." + key));
    Vec out;
    for (const auto& x : v) out.push_back(x.get<double>());
    return out;
}

template <typename T>
T opt(const json& j, const std::string& key, T fallback) {
    if (j.is_object() && j.contains(key)) return j.at(key).get<T>();
    return fallback;
}

/// Schedule from config. kind power_law {a, c, r}; explicit {steps, r};
/// power_law_shifted {a, c, n0, steps, r} materializes c/(n+n0)^a as an
/// explicit list (damped start, same tail).
inline StepSchedule schedule_from(const json& j, const std::string& path,
                                  std::size_t default_steps) {
    const std::string kind = need_str(j, "kind", path);
    const double r = need_num(j, "r", path);
    if (kind == "power_law") {
        return StepSchedule::power_law(need_num(j, "a", path), need_num(j, "c", path), r);
    }
    if (kind == "explicit") {
        const Vec steps = need_vec(j, "steps", path);
        return StepSchedule::explicit_steps(std::vector<double>(steps.begin(), steps.end()), r);
    }
    if (kind == "power_law_shifted") {
        const double a = need_num(j, "a", path);
        const double c = need_num(j, "c", path);
        const double n0 = need_num(j, "n0", path);
        const auto count = static_cast<std::size_t>(opt<double>(
            j, "steps", static_cast<double>(default_steps)));
        if (count == 0) throw ConfigError("field must be positive: " + path + ".steps");
        std::vector<double> steps(count);
        for (std::size_t i = 0; i < count; ++i)
            steps[i] = c * std::pow(static_cast<double>(i) + n0, -a);
        return StepSchedule::explicit_steps(std::move(steps), r);
    }
    throw ConfigError("unknown schedule kind at " + path + ".kind");
}

inline NoiseProcess noise_from(const json& j, const std::string& path, std::size_t dim,
                               std::uint64_t default_seed, const ObjectiveOracle* oracle) {
    const std::string kind = need_str(j, "kind", path);
    const auto seed = static_cast<std::uint64_t>(
        opt<double>(j, "seed", static_cast<double>(default_seed)));
    if (kind == "none") return NoiseProcess::none(dim);
    if (kind == "iid_gaussian")
        return NoiseProcess::iid_gaussian(dim, need_num(j, "sigma", path), seed);
    if (kind == "iid_uniform")
        return NoiseProcess::iid_uniform(dim, need_num(j, "halfwidth", path), seed);
    if (kind == "markov") {
        if (!oracle) throw ConfigError("markov noise needs an oracle context at " + path);
        const Vec A = need_vec(j, "A", path);
        const auto state_dim = static_cast<std::size_t>(need_num(j, "state_dim", path));
        const Vec C = need_vec(j, "C", path);
        const Vec h = need_vec(j, "h", path);
        return NoiseProcess::markov(
            linear_markov_chain(*oracle, std::vector<double>(A.begin(), A.end()), state_dim,
                                std::vector<double>(C.begin(), C.end()), h),
            dim, seed);
    }
    throw ConfigError("unknown noise kind at " + path + ".kind");
}

inline ArmaSystem system_from(const json& j, const std::string& path) {
    const double noise_var = need_num(j, "noise_var", path);
    const auto seed =
        static_cast<std::uint64_t>(opt<double>(j, "seed", 1.0));
    if (j.contains("arma11")) {
        const json& m = j.at("arma11");
        return arma11_system(need_num(m, "a", path + ".arma11"), need_num(m, "b", path + ".arma11"),
                             noise_var, seed);
    }
    const json& Aj = need(j, "A", path);
    if (!Aj.is_array() || Aj.empty() || !Aj[0].is_array())
        throw ConfigError("field must be a matrix (array of rows): " + path + ".A");
    const std::size_t L = Aj.size();
    std::vector<double> A;
    for (const auto& row : Aj) {
        if (row.size() != L) throw ConfigError("matrix is not square: " + path + ".A");
        for (const auto& x : row) A.push_back(x.get<double>());
    }
    const Vec b = need_vec(j, "b", path);
    Vec h = j.contains("h") ? need_vec(j, "h", path) : Vec(L, 0.0);
    if (!j.contains("h")) h[0] = 1.0;
    return ArmaSystem(L, std::move(A), b, h, noise_var, seed,
                      opt<double>(j, "driver_mean", 0.0));
}

}  // namespace cfg

struct ExperimentResult {
    std::string name;
    bool ok = true;  // parsed, ran, and wrote outputs without error
    std::string error;
    bool any_slower = false;
    std::vector<std::string> failed_expectations;
    std::vector<std::string> summary;
    std::vector<fs::path> files;
};

namespace detail_exp {

inline void check_expectations(const json& expect, const Trajectory* traj,
                               const RateReport* rep, const IdentTrace* ident,
                               ExperimentResult& res) {
    auto fail = [&](const std::string& what) { res.failed_expectations.push_back(what); };

    if (expect.contains("status")) {
        const std::string want = expect.at("status").get<std::string>();
        const std::string got = traj ? to_string(traj->status)
                                     : (ident ? to_string(ident->status) : std::string("?"));
        if (got != want) fail("status: want " + want + ", got " + got);
    }
    if (expect.contains("final_f_le") && traj) {
        const double cap = expect.at("final_f_le").get<double>();
        if (!(traj->points.back().f <= cap))
            fail("final_f_le: " + format_double(traj->points.back().f) + " > " +
                 format_double(cap));
    }
    if (expect.contains("tail_oscillation_le") && traj) {
        const json& t = expect.at("tail_oscillation_le");
        const double frac = cfg::opt<double>(t, "n0_fraction", 0.9);
        const double tol = t.at("tol").get<double>();
        const auto n0 = static_cast<std::size_t>(
            frac * static_cast<double>(traj->points.back().n));
        const double osc = tail_oscillation(*traj, n0);
        if (!(osc <= tol))
            fail("tail_oscillation_le: " + format_double(osc) + " > " + format_double(tol));
    }
    if (expect.contains("final_theta_within")) {
        const json& t = expect.at("final_theta_within");
        const Vec target = cfg::need_vec(t, "target", "expect.final_theta_within");
        const double tol = t.at("tol").get<double>();
        Vec got;
        if (ident)
            got = ident->theta_end;
        else if (traj && !traj->thetas.empty())
            got = traj->thetas.back();
        if (got.empty())
            fail("final_theta_within: no recorded parameters");
        else if (!(norm(got - target) <= tol))
            fail("final_theta_within: distance " + format_double(norm(got - target)) + " > " +
                 format_double(tol));
    }
    if (expect.contains("final_f_within") && ident) {
        const json& t = expect.at("final_f_within");
        const double target = t.at("target").get<double>();
        const double rel = t.at("rel_tol").get<double>();
        const double got = ident->points.back().f_theta;
        if (!(std::abs(got - target) <= rel * std::abs(target)))
            fail("final_f_within: " + format_double(got) + " vs " + format_double(target));
    }
    if (expect.contains("fgap_verdict_in") && rep) {
        const auto& allowed = expect.at("fgap_verdict_in");
        const std::string got = to_string(rep->entries.at(0).fit.verdict);
        bool ok = false;
        for (const auto& v : allowed)
            if (v.get<std::string>() == got) ok = true;
        if (!ok) fail("fgap_verdict_in: got " + got);
    }
    if (expect.contains("exponential_regime") && rep) {
        if (rep->exponential_regime != expect.at("exponential_regime").get<bool>())
            fail("exponential_regime: detector mismatch");
    }
    if (expect.contains("exp_slope_within") && rep) {
        const json& t = expect.at("exp_slope_within");
        const double target = t.at("target").get<double>();
        const double rel = t.at("rel_tol").get<double>();
        if (!(std::abs(rep->exp_slope - target) <= rel * std::abs(target)))
            fail("exp_slope_within: " + format_double(rep->exp_slope));
    }
}

inline void verdict_scan(const RateReport& rep, ExperimentResult& res) {
    for (const auto& e : rep.entries)
        if (e.fit.verdict == RateVerdict::slower) res.any_slower = true;
}

}  // namespace detail_exp

/// Run one experiment config; writes outputs under out_root/<name>/ and
/// removes everything written on failure. Repetition k derives its noise
/// seed as base + k. Identical config and seed give byte-identical files.
inline ExperimentResult run_experiment(const fs::path& config_path, const fs::path& out_root,
                                       std::optional<std::uint64_t> seed_override = {},
                                       std::size_t jobs = 1) {
    ExperimentResult res;
    json j;
    {
        std::ifstream in(config_path);
        if (!in) {
            res.ok = false;
            res.error = "cannot read config: " + config_path.string();
            return res;
        }
        try {
            in >> j;
        } catch (const std::exception& e) {
            res.ok = false;
            res.error = std::string("config parse error: ") + e.what();
            return res;
        }
    }

    fs::path dir;
    try {
        const std::string kind = cfg::need_str(j, "kind", "");
        res.name = cfg::need_str(j, "name", "");
        const auto base_seed = seed_override.value_or(
            static_cast<std::uint64_t>(cfg::opt<double>(j, "seed", 1.0)));
        const auto reps = static_cast<std::size_t>(cfg::opt<double>(j, "repetitions", 1.0));
        dir = out_root / res.name;
        fs::create_directories(dir);

        auto open_out = [&](const std::string& fname) {
            const fs::path p = dir / fname;
            res.files.push_back(p);
            return std::ofstream(p);
        };
        const json expect = j.contains("expect") ? j.at("expect") : json::object();

        if (kind == "sgd") {
            auto suite_oracles = builtin_suite();
            const auto& oracle = find_oracle(suite_oracles, cfg::need_str(j, "oracle", ""));
            const auto max_iters =
                static_cast<std::size_t>(cfg::need_num(j, "max_iters", ""));
            auto sched = cfg::schedule_from(cfg::need(j, "schedule", ""), "schedule", max_iters);

            RunOptions opts;
            opts.theta0 = cfg::need_vec(j, "theta0", "");
            opts.max_iters = max_iters;
            opts.divergence_radius = cfg::opt<double>(j, "divergence_radius", 1e6);
            opts.record_theta = cfg::opt<bool>(j, "record_theta", false);
            opts.log_ratio = cfg::opt<double>(j, "log_ratio", 1.05);
            opts.log_every = static_cast<std::size_t>(cfg::opt<double>(j, "log_every", 0.0));

            std::vector<Trajectory> trajs(reps);
            auto run_one = [&](std::size_t k) {
                auto noise = cfg::noise_from(cfg::need(j, "noise", ""), "noise", oracle.dim,
                                             derive_seed(base_seed, k), &oracle);
                trajs[k] = run(oracle, sched, noise, opts);
            };
            if (jobs > 1 && reps > 1) {
                std::vector<std::thread> pool;
                std::atomic<std::size_t> next{0};
                for (std::size_t t = 0; t < std::min(jobs, reps); ++t)
                    pool.emplace_back([&] {
                        for (std::size_t k = next++; k < reps; k = next++) run_one(k);
                    });
                for (auto& t : pool) t.join();
            } else {
                for (std::size_t k = 0; k < reps; ++k) run_one(k);
            }

            for (std::size_t k = 0; k < reps; ++k) {
                auto os = open_out("trajectory_rep" + std::to_string(k) + ".csv");
                write_trajectory_csv(os, trajs[k]);
            }

            std::optional<RateReport> rep0;
            if (j.contains("rates")) {
                const json& rj = j.at("rates");
                const double mu = cfg::need_num(rj, "mu", "rates");
                const double r = cfg::need_num(rj, "r", "rates");
                const double fhat = cfg::need_num(rj, "fhat", "rates");
                const double tol = cfg::opt<double>(rj, "tol", 0.3);
                auto os = open_out("rates.csv");
                for (std::size_t k = 0; k < reps; ++k) {
                    auto rep = predict_vs_measure(trajs[k], mu, r, fhat, tol);
                    write_rate_report_csv(os, res.name + "_rep" + std::to_string(k), rep);
                    detail_exp::verdict_scan(rep, res);
                    if (k == 0) rep0 = rep;
                }
                auto pd = open_out("plot_f_gap_rep0.csv");
                write_plotdata(pd, trajs[0], RateQuantity::f_gap, fhat, rep0->entries[0].fit);
                res.summary.push_back("f_gap slope rep0: " +
                                      format_double(rep0->entries[0].fit.slope) + " (" +
                                      to_string(rep0->entries[0].fit.verdict) + ", predicted -" +
                                      format_double(rep0->constants.p_hat) + ")");
                if (rep0->exponential_regime)
                    res.summary.push_back("exponential regime detected, log-f slope vs gamma: " +
                                          format_double(rep0->exp_slope));
            }
            res.summary.push_back("status rep0: " + to_string(trajs[0].status));
            detail_exp::check_expectations(expect, &trajs[0], rep0 ? &*rep0 : nullptr, nullptr,
                                           res);
        } else if (kind == "arma") {
            const std::string mode = cfg::need_str(j, "mode", "");
            auto sys = cfg::system_from(cfg::need(j, "system", ""), "system");
            if (seed_override) sys.seed = *seed_override;
            if (mode == "simulate") {
                const auto steps = static_cast<std::size_t>(cfg::need_num(j, "steps", ""));
                auto os = open_out("signal.csv");
                write_signal_csv(os, simulate_signal(sys, steps));
                res.summary.push_back("simulated " + std::to_string(steps) + " samples");
            } else if (mode == "identify") {
                const json& mj = cfg::need(j, "model", "");
                const auto M = static_cast<std::size_t>(cfg::need_num(mj, "M", "model"));
                const auto N = static_cast<std::size_t>(cfg::need_num(mj, "N", "model"));
                IdentOptions opts;
                opts.theta0 = cfg::need_vec(j, "theta0", "");
                opts.max_iters = static_cast<std::size_t>(cfg::need_num(j, "max_iters", ""));
                opts.guard = cfg::opt<double>(j, "guard", 0.02);
                const std::string pol = cfg::opt<std::string>(j, "policy", "halt");
                if (pol != "halt" && pol != "project")
                    throw ConfigError("unknown guard policy: " + pol);
                opts.policy = pol == "halt" ? GuardPolicy::halt : GuardPolicy::project;
                auto sched =
                    cfg::schedule_from(cfg::need(j, "schedule", ""), "schedule", opts.max_iters);
                auto trace = identify(sys, M, N, sched, opts);
                auto os = open_out("ident.csv");
                write_ident_csv(os, trace);
                res.summary.push_back("status: " + to_string(trace.status));
                if (!trace.theta_end.empty()) {
                    std::string s = "theta_end:";
                    for (double v : trace.theta_end) s += " " + format_double(v);
                    res.summary.push_back(s);
                }
                res.summary.push_back("final f: " +
                                      format_double(trace.points.back().f_theta));
                detail_exp::check_expectations(expect, nullptr, nullptr, &trace, res);
            } else {
                throw ConfigError("unknown arma mode: " + mode);
            }
        } else if (kind == "mlp") {
            const json& mj = cfg::need(j, "mlp", "");
            const auto M = static_cast<std::size_t>(cfg::need_num(mj, "M", "mlp"));
            const auto N = static_cast<std::size_t>(cfg::need_num(mj, "N", "mlp"));
            const Activation act = activation_from_name(cfg::need_str(mj, "activation", "mlp"));
            const double L = cfg::need_num(mj, "L", "mlp");
            const auto teacher_seed = static_cast<std::uint64_t>(
                cfg::opt<double>(mj, "teacher_seed", 100.0));
            const double init_spread = cfg::opt<double>(mj, "init_spread", 0.2);
            const std::string source_kind = cfg::opt<std::string>(mj, "source", "teacher");

            TrainOptions opts;
            opts.max_iters = static_cast<std::size_t>(cfg::need_num(j, "max_iters", ""));
            opts.data_seed = static_cast<std::uint64_t>(cfg::opt<double>(
                mj, "data_seed", static_cast<double>(derive_seed(base_seed, 1))));
            opts.eval_seed = static_cast<std::uint64_t>(
                cfg::opt<double>(mj, "eval_seed", static_cast<double>(derive_seed(base_seed, 2))));
            opts.eval_size = static_cast<std::size_t>(cfg::opt<double>(mj, "eval_size", 10000.0));
            auto sched =
                cfg::schedule_from(cfg::need(j, "schedule", ""), "schedule", opts.max_iters);

            TrainingSource src;
            PerceptronParams init{};
            if (source_kind == "teacher") {
                auto teacher = random_params(M, N, cfg::opt<double>(mj, "teacher_spread", 0.5),
                                             teacher_seed);
                src = teacher_source(teacher, act, L);
                init = teacher;
                Rng perturb(static_cast<std::uint64_t>(
                    cfg::opt<double>(mj, "init_seed", 101.0)));
                for (auto& v : init.a) v += perturb.uniform(-init_spread, init_spread);
                for (auto& v : init.B) v += perturb.uniform(-init_spread, init_spread);
            } else if (source_kind.rfind("constant:", 0) == 0) {
                const double target = std::stod(source_kind.substr(9));
                src = constant_target_source(target, N, L);
                init = random_params(M, N, 0.3, static_cast<std::uint64_t>(
                                                    cfg::opt<double>(mj, "init_seed", 101.0)));
            } else {
                throw ConfigError("unknown mlp source: " + source_kind);
            }

            auto traj = train(init, act, src, sched, opts);
            auto os = open_out("train.csv");
            write_trajectory_csv(os, traj);
            res.summary.push_back("status: " + to_string(traj.status));
            res.summary.push_back("final heldout loss: " + format_double(traj.points.back().f));
            detail_exp::check_expectations(expect, &traj, nullptr, nullptr, res);
        } else if (kind == "rates") {
            const fs::path tpath = config_path.parent_path() /
                                   cfg::need_str(j, "trajectory", "");
            std::ifstream in(tpath);
            if (!in) throw ConfigError("cannot read trajectory: " + tpath.string());
            const Trajectory traj = read_trajectory_csv(in);
            auto rep = predict_vs_measure(traj, cfg::need_num(j, "mu", ""),
                                          cfg::need_num(j, "r", ""), cfg::need_num(j, "fhat", ""),
                                          cfg::opt<double>(j, "tol", 0.3));
            auto os = open_out("rates.csv");
            write_rate_report_csv(os, res.name, rep);
            detail_exp::verdict_scan(rep, res);
            res.summary.push_back("f_gap slope: " + format_double(rep.entries[0].fit.slope));
            detail_exp::check_expectations(expect, &traj, &rep, nullptr, res);
        } else if (kind == "diagnostics") {
            const auto horizon = static_cast<std::size_t>(cfg::need_num(j, "horizon", ""));
            auto sched = cfg::schedule_from(cfg::need(j, "schedule", ""), "schedule", horizon);
            const Vec r_values = cfg::need_vec(j, "r_values", "");
            auto noise = cfg::noise_from(cfg::need(j, "noise", ""), "noise", 1,
                                         derive_seed(base_seed, 0), nullptr);
            std::vector<Vec> xi;
            xi.reserve(horizon);
            Vec th{0.0}, g{0.0};
            for (std::size_t i = 0; i < horizon; ++i) xi.push_back(noise.next_noise(th, g));
            for (double r : r_values) {
                auto d = noise_average_diagnostic(
                    xi, sched, r,
                    static_cast<std::size_t>(cfg::opt<double>(j, "grid_points", 64.0)));
                auto os = open_out("diag_r" + format_double(r) + ".csv");
                os << "n,window_max,running_max\n";
                for (std::size_t i = 0; i < d.n_grid.size(); ++i)
                    os << d.n_grid[i] << ',' << format_double(d.window_max[i]) << ','
                       << format_double(d.running_max[i]) << "\n";
                res.summary.push_back("r=" + format_double(r) + " running max: " +
                                      format_double(d.running_max.back()));
            }
        } else {
            throw ConfigError("unknown experiment kind: " + kind);
        }

        {
            auto os = open_out("summary.txt");
            os << "experiment: " << res.name << "\n";
            for (const auto& line : res.summary) os << line << "\n";
            for (const auto& f : res.failed_expectations) os << "EXPECT FAILED: " << f << "\n";
            if (res.failed_expectations.empty()) os << "all expectations met\n";
        }
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
        for (const auto& f : res.files) {
            std::error_code ec;
            fs::remove(f, ec);
        }
        res.files.clear();
        return res;
    }
    return res;
}

/// Run every *.json config in the directory (sorted by name). Exit status
/// covenant: nonzero iff any rate verdict is "slower", any expectation
/// fails, or any config fails to run.
inline int run_suite(const fs::path& configs_dir, const fs::path& out_root,
                     std::optional<std::uint64_t> seed_override = {}, std::size_t jobs = 1,
                     std::ostream* log = nullptr) {
    std::vector<fs::path> configs;
    for (const auto& entry : fs::directory_iterator(configs_dir))
        if (entry.path().extension() == ".json") configs.push_back(entry.path());
    std::sort(configs.begin(), configs.end());
    if (configs.empty()) {
        if (log) *log << "no configs found in " << configs_dir << "\n";
        return 2;
    }
    int failures = 0;
    std::ostringstream all;
    for (const auto& c : configs) {
        auto res = run_experiment(c, out_root, seed_override, jobs);
        std::string status = "ok";
        if (!res.ok)
            status = "error: " + res.error;
        else if (res.any_slower)
            status = "verdict slower";
        else if (!res.failed_expectations.empty())
            status = "expectation failed: " + res.failed_expectations.front();
        const bool good = res.ok && !res.any_slower && res.failed_expectations.empty();
        if (!good) ++failures;
        all << (good ? "[pass] " : "[FAIL] ") << c.filename().string() << " " << status << "\n";
        if (log) *log << (good ? "[pass] " : "[FAIL] ") << c.filename().string() << " " << status
                      << "\n";
    }
    std::ofstream os(out_root / "suite_summary.txt");
    os << all.str();
    return failures == 0 ? 0 : 1;
}

}  // namespace loja
