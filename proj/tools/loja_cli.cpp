// Experiment driver for the stochastic gradient search laboratory.
//
// Subcommands:
//   run <config.json>      run one experiment config
//   suite [dir]            run every config in a directory; exit 0 only if
//                          no verdict is "slower" and all expectations hold
//   rates <trajectory.csv> fit decay exponents against predictions
//   arma-sim               simulate a linear state-space signal
//   arma-ident             run the recursive prediction-error identifier
//   mlp-train              online training of a two-layer perceptron
//   validate-schedule      admissibility report for a step-size schedule
//
// Output root: --out flag, else LOJA_OUT, else ./out.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "loja/arma.hpp"
#include "loja/csv.hpp"
#include "loja/experiment.hpp"
#include "loja/mlp.hpp"
#include "loja/rates.hpp"
#include "loja/schedule.hpp"

namespace fs = std::filesystem;
using namespace loja;

namespace {

fs::path output_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("LOJA_OUT")) return env;
    return "out";
}

std::vector<double> parse_matrix(const std::string& text, std::size_t& L) {
    // rows separated by ';', entries by whitespace
    std::vector<double> A;
    std::size_t rows = 0, cols = 0;
    std::stringstream rs(text);
    std::string row;
    while (std::getline(rs, row, ';')) {
        std::stringstream es(row);
        double v;
        std::size_t c = 0;
        while (es >> v) {
            A.push_back(v);
            ++c;
        }
        if (cols == 0) cols = c;
        if (c != cols) throw std::runtime_error("matrix rows have unequal lengths");
        ++rows;
    }
    if (rows != cols) throw std::runtime_error("matrix must be square");
    L = rows;
    return A;
}

std::vector<double> parse_vector(const std::string& text) {
    std::vector<double> v;
    std::stringstream es(text);
    double x;
    while (es >> x) v.push_back(x);
    return v;
}

struct ScheduleFlags {
    double a = 0.8;
    double c = 1.0;
    double r = 1.4;

    void attach(CLI::App* cmd) {
        cmd->add_option("--a", a, "power-law exponent in (3/4, 1]");
        cmd->add_option("--c", c, "step scale");
        cmd->add_option("--r", r, "noise-weighting exponent (> 1)");
    }

    StepSchedule build() const { return StepSchedule::power_law(a, c, r); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic gradient search laboratory"};
    app.require_subcommand(1);
    app.fallthrough();  // --out/--seed/--jobs may follow the subcommand

    std::string out_flag;
    std::optional<std::uint64_t> seed_flag;
    std::size_t jobs = 1;
    app.add_option("--out", out_flag, "output root directory (default $LOJA_OUT or ./out)");
    std::uint64_t seed_raw = 0;
    auto* seed_opt = app.add_option("--seed", seed_raw, "override the experiment seed");
    app.add_option("--jobs", jobs, "max concurrent repetitions");

    // run
    auto* cmd_run = app.add_subcommand("run", "run one experiment config");
    std::string run_config;
    cmd_run->add_option("config", run_config, "experiment config (json)")->required();

    // suite
    auto* cmd_suite = app.add_subcommand("suite", "run all configs in a directory");
    std::string suite_dir = "configs";
    cmd_suite->add_option("dir", suite_dir, "directory of experiment configs");

    // rates
    auto* cmd_rates = app.add_subcommand("rates", "fit decay exponents of a recorded run");
    std::string rates_csv;
    double rates_mu = 2.0, rates_r = 1.4, rates_fhat = 0.0, rates_tol = 0.3;
    cmd_rates->add_option("trajectory", rates_csv, "trajectory csv")->required();
    cmd_rates->add_option("--mu", rates_mu, "sharpness exponent in (1,2]")->required();
    cmd_rates->add_option("--r", rates_r, "noise-weighting exponent")->required();
    cmd_rates->add_option("--fhat", rates_fhat, "limit value of f")->required();
    cmd_rates->add_option("--tol", rates_tol, "slope tolerance");

    // arma-sim
    auto* cmd_asim = app.add_subcommand("arma-sim", "simulate a linear state-space signal");
    std::string asim_A = "0.5 0.3;0 0", asim_b = "1 0", asim_h = "1 1";
    double asim_var = 1.0;
    std::uint64_t asim_seed = 1;
    std::size_t asim_steps = 10000;
    cmd_asim->add_option("--A", asim_A, "state matrix, rows ';'-separated");
    cmd_asim->add_option("--b", asim_b, "output loading vector");
    cmd_asim->add_option("--hvec", asim_h, "driver loading vector");
    cmd_asim->add_option("--noise-var", asim_var, "driver variance");
    cmd_asim->add_option("--sim-seed", asim_seed, "generator seed");
    cmd_asim->add_option("--steps", asim_steps, "samples to emit");

    // arma-ident
    auto* cmd_aid = app.add_subcommand("arma-ident", "recursive prediction-error identification");
    std::string aid_A = "0.5 0.3;0 0", aid_b = "1 0", aid_h = "1 1", aid_theta0 = "0 0";
    double aid_var = 1.0, aid_guard = 0.02;
    std::uint64_t aid_seed = 42;
    std::size_t aid_M = 1, aid_N = 1, aid_iters = 1000000;
    std::string aid_policy = "halt";
    ScheduleFlags aid_sched;
    aid_sched.c = 0.2;
    cmd_aid->add_option("--A", aid_A, "true system state matrix");
    cmd_aid->add_option("--b", aid_b, "output loading");
    cmd_aid->add_option("--hvec", aid_h, "driver loading");
    cmd_aid->add_option("--noise-var", aid_var, "driver variance");
    cmd_aid->add_option("--sim-seed", aid_seed, "generator seed");
    cmd_aid->add_option("--M", aid_M, "AR order of the model");
    cmd_aid->add_option("--N", aid_N, "MA order of the model");
    cmd_aid->add_option("--theta0", aid_theta0, "initial parameters");
    cmd_aid->add_option("--iters", aid_iters, "iterations");
    cmd_aid->add_option("--guard", aid_guard, "stability margin to maintain");
    cmd_aid->add_option("--policy", aid_policy, "guard policy: halt | project");
    aid_sched.attach(cmd_aid);

    // mlp-train
    auto* cmd_mlp = app.add_subcommand("mlp-train", "online two-layer perceptron training");
    std::size_t mlp_M = 3, mlp_N = 2, mlp_iters = 200000, mlp_eval = 10000;
    std::string mlp_act = "logistic";
    double mlp_L = 2.0;
    std::uint64_t mlp_teacher_seed = 100, mlp_init_seed = 101, mlp_data_seed = 102,
                  mlp_eval_seed = 103;
    ScheduleFlags mlp_sched;
    mlp_sched.c = 0.5;
    cmd_mlp->add_option("--M", mlp_M, "hidden units");
    cmd_mlp->add_option("--N", mlp_N, "input dimension");
    cmd_mlp->add_option("--activation", mlp_act, "logistic | gaussian");
    cmd_mlp->add_option("--L", mlp_L, "sample bound");
    cmd_mlp->add_option("--iters", mlp_iters, "iterations");
    cmd_mlp->add_option("--eval-size", mlp_eval, "held-out evaluation set size");
    cmd_mlp->add_option("--teacher-seed", mlp_teacher_seed, "teacher parameter seed");
    cmd_mlp->add_option("--init-seed", mlp_init_seed, "initialization seed");
    cmd_mlp->add_option("--data-seed", mlp_data_seed, "training stream seed");
    cmd_mlp->add_option("--eval-seed", mlp_eval_seed, "evaluation set seed");
    mlp_sched.attach(cmd_mlp);

    // validate-schedule
    auto* cmd_val = app.add_subcommand("validate-schedule", "schedule admissibility report");
    double val_a = 0.8, val_c = 1.0, val_r = 1.4;
    std::size_t val_horizon = 100000;
    std::string val_steps_file;
    cmd_val->add_option("--a", val_a, "power-law exponent");
    cmd_val->add_option("--c", val_c, "step scale");
    cmd_val->add_option("--r", val_r, "noise-weighting exponent");
    cmd_val->add_option("--horizon", val_horizon, "numeric-evidence horizon");
    cmd_val->add_option("--steps-file", val_steps_file,
                        "file with one explicit step per line (overrides --a/--c)");

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count() > 0) seed_flag = seed_raw;
    const fs::path out_root = output_root(out_flag);

    try {
        if (*cmd_run) {
            auto res = run_experiment(run_config, out_root, seed_flag, jobs);
            if (!res.ok) {
                std::cerr << "error: " << res.error << "\n";
                return 1;
            }
            for (const auto& line : res.summary) std::cout << line << "\n";
            for (const auto& f : res.failed_expectations)
                std::cout << "EXPECT FAILED: " << f << "\n";
            if (res.any_slower) std::cout << "verdict: slower than predicted\n";
            return (res.any_slower || !res.failed_expectations.empty()) ? 1 : 0;
        }

        if (*cmd_suite) {
            return run_suite(suite_dir, out_root, seed_flag, jobs, &std::cout);
        }

        if (*cmd_rates) {
            std::ifstream in(rates_csv);
            if (!in) {
                std::cerr << "error: cannot read " << rates_csv << "\n";
                return 1;
            }
            const Trajectory traj = read_trajectory_csv(in);
            auto rep = predict_vs_measure(traj, rates_mu, rates_r, rates_fhat, rates_tol);
            write_rate_report_csv(std::cout, fs::path(rates_csv).stem().string(), rep);
            for (const auto& e : rep.entries)
                if (e.fit.verdict == RateVerdict::slower) return 1;
            return 0;
        }

        if (*cmd_asim) {
            std::size_t L = 0;
            auto A = parse_matrix(asim_A, L);
            ArmaSystem sys(L, std::move(A), parse_vector(asim_b), parse_vector(asim_h), asim_var,
                           asim_seed);
            fs::create_directories(out_root);
            const fs::path p = out_root / "signal.csv";
            std::ofstream os(p);
            write_signal_csv(os, simulate_signal(sys, asim_steps));
            std::cout << "wrote " << p.string() << "\n";
            return 0;
        }

        if (*cmd_aid) {
            std::size_t L = 0;
            auto A = parse_matrix(aid_A, L);
            ArmaSystem sys(L, std::move(A), parse_vector(aid_b), parse_vector(aid_h), aid_var,
                           aid_seed);
            IdentOptions opts;
            opts.theta0 = parse_vector(aid_theta0);
            opts.max_iters = aid_iters;
            opts.guard = aid_guard;
            opts.policy = aid_policy == "project" ? GuardPolicy::project : GuardPolicy::halt;
            auto trace = identify(sys, aid_M, aid_N, aid_sched.build(), opts);
            fs::create_directories(out_root);
            const fs::path p = out_root / "ident.csv";
            std::ofstream os(p);
            write_ident_csv(os, trace);
            std::cout << "status: " << to_string(trace.status) << "\n";
            if (!trace.theta_end.empty()) {
                std::cout << "theta_end:";
                for (double v : trace.theta_end) std::cout << ' ' << format_double(v);
                std::cout << "\n";
            }
            std::cout << "wrote " << p.string() << "\n";
            return trace.status == IdentStatus::completed ? 0 : 1;
        }

        if (*cmd_mlp) {
            const Activation act = activation_from_name(mlp_act);
            auto teacher = random_params(mlp_M, mlp_N, 0.5, mlp_teacher_seed);
            auto src = teacher_source(teacher, act, mlp_L);
            PerceptronParams init = teacher;
            Rng perturb(mlp_init_seed);
            for (auto& v : init.a) v += perturb.uniform(-0.2, 0.2);
            for (auto& v : init.B) v += perturb.uniform(-0.2, 0.2);
            TrainOptions opts;
            opts.max_iters = mlp_iters;
            opts.data_seed = mlp_data_seed;
            opts.eval_seed = mlp_eval_seed;
            opts.eval_size = mlp_eval;
            auto traj = train(init, act, src, mlp_sched.build(), opts);
            fs::create_directories(out_root);
            const fs::path p = out_root / "train.csv";
            std::ofstream os(p);
            write_trajectory_csv(os, traj);
            std::cout << "status: " << to_string(traj.status) << "\n";
            std::cout << "final heldout loss: " << format_double(traj.points.back().f) << "\n";
            std::cout << "wrote " << p.string() << "\n";
            return traj.status == RunStatus::completed ? 0 : 1;
        }

        if (*cmd_val) {
            ScheduleValidation v;
            if (!val_steps_file.empty()) {
                std::ifstream in(val_steps_file);
                if (!in) {
                    std::cerr << "error: cannot read " << val_steps_file << "\n";
                    return 1;
                }
                std::vector<double> steps;
                double x;
                while (in >> x) steps.push_back(x);
                v = validate_schedule(StepSchedule::explicit_steps(std::move(steps), val_r),
                                      val_horizon);
            } else {
                v = validate_power_law(val_a, val_c, val_r, val_horizon);
            }
            std::cout << "admissible: " << (v.admissible ? "yes" : "no") << "\n";
            if (!v.reason.empty()) std::cout << "reason: " << v.reason << "\n";
            std::cout << "steps vanish: " << (v.steps_vanish ? "yes" : "no")
                      << ", step sum diverges: " << (v.steps_diverge ? "yes" : "no/unknown")
                      << "\n";
            std::cout << "admissible r interval: (" << format_double(v.r_lower) << ", "
                      << format_double(v.r_upper) << ")\n";
            std::cout << "weighted square sum at horizon: " << format_double(v.weighted_square_sum)
                      << "\n";
            std::cout << "block increment ratio: " << format_double(v.block_increment_ratio)
                      << " ("
                      << (v.trend == SumTrend::converging
                              ? "converging"
                              : v.trend == SumTrend::growing ? "growing" : "inconclusive")
                      << ")\n";
            std::cout << "sup |1/alpha' - 1/alpha| over horizon: "
                      << format_double(v.inv_step_delta_sup) << "\n";
            return v.admissible ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
