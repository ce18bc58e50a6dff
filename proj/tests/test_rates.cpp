#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "loja/rates.hpp"

using namespace loja;

namespace {

// Synthetic trajectory with a prescribed quantity profile over gamma.
Trajectory synthetic(const std::function<double(double)>& f_of_gamma, double g_lo, double g_hi,
                     std::size_t pts) {
    Trajectory t;
    t.dim = 1;
    const double ratio = std::pow(g_hi / g_lo, 1.0 / static_cast<double>(pts - 1));
    double g = g_lo;
    for (std::size_t i = 0; i < pts; ++i) {
        t.points.push_back({i, g, f_of_gamma(g), f_of_gamma(g)});
        g *= ratio;
    }
    return t;
}

}  // namespace

TEST_CASE("rate constants: substitution examples") {
    {
        auto rc = rate_constants(2.0, 1.2);
        CHECK(std::isinf(rc.r_hat));
        CHECK(rc.p_hat == Catch::Approx(2.4).epsilon(1e-15));
        CHECK(rc.q_hat == Catch::Approx(0.2).epsilon(1e-15));
    }
    {
        auto rc = rate_constants(4.0 / 3.0, 2.0);
        CHECK(rc.r_hat == Catch::Approx(1.5).epsilon(1e-12));
        CHECK(rc.p_hat == Catch::Approx(2.0).epsilon(1e-12));
        CHECK(rc.q_hat == Catch::Approx(0.5).epsilon(1e-12));
    }
    {
        auto rc = rate_constants(4.0 / 3.0, 1.2);
        CHECK(rc.p_hat == Catch::Approx(1.6).epsilon(1e-12));
        CHECK(rc.q_hat == Catch::Approx(0.2).epsilon(1e-12));
    }
    CHECK_THROWS_AS(rate_constants(1.0, 1.5), std::domain_error);
    CHECK_THROWS_AS(rate_constants(2.5, 1.5), std::domain_error);
    CHECK_THROWS_AS(rate_constants(1.5, 1.0), std::domain_error);
}

TEST_CASE("rate constants: monotone in r over a grid") {
    for (int i = 1; i <= 20; ++i) {
        const double mu = 1.0 + i * (1.0 / 20.0);  // (1, 2]
        double prev_p = -1.0, prev_q = -1.0;
        for (int j = 1; j <= 20; ++j) {
            const double r = 1.0 + j * 0.2;
            auto rc = rate_constants(mu, r);
            CHECK(rc.p_hat >= prev_p);
            CHECK(rc.q_hat >= prev_q);
            CHECK(rc.p_hat > 1.0);
            prev_p = rc.p_hat;
            prev_q = rc.q_hat;
        }
    }
}

TEST_CASE("varphi branch classification") {
    CHECK(varphi_case(1.2, 1.5) == VarphiCase::below);
    CHECK(varphi_case(1.5, 1.5) == VarphiCase::critical);
    CHECK(varphi_case(2.0, 1.5) == VarphiCase::above);
}

TEST_CASE("fit: exact power law recovered to high precision") {
    auto t = synthetic([](double g) { return std::pow(g, -2.0); }, 1.0, 1000.0, 100);
    auto fit = fit_loglog(t, RateQuantity::f_gap, 0.0, nullptr, {1.0, 1000.0}, 2.0);
    CHECK(std::abs(fit.slope + 2.0) < 1e-9);
    CHECK(fit.verdict == RateVerdict::consistent);
    CHECK(fit.slope_half_width < 1e-9);
}

TEST_CASE("fit: wobbled power law within tolerance") {
    auto t = synthetic([](double g) { return 5.0 * std::pow(g, -1.6) * (1.0 + 0.01 * std::sin(std::log(g))); },
                       1.0, 1e4, 200);
    auto fit = fit_loglog(t, RateQuantity::f_gap, 0.0, nullptr, {1.0, 1e4}, 1.6);
    CHECK(fit.slope == Catch::Approx(-1.6).margin(0.05));
}

TEST_CASE("fit: verdict logic") {
    auto fast = synthetic([](double g) { return std::pow(g, -3.0); }, 1.0, 100.0, 60);
    CHECK(fit_loglog(fast, RateQuantity::f_gap, 0.0, nullptr, {1.0, 100.0}, 2.0).verdict ==
          RateVerdict::faster);
    auto slow = synthetic([](double g) { return std::pow(g, -1.0); }, 1.0, 100.0, 60);
    CHECK(fit_loglog(slow, RateQuantity::f_gap, 0.0, nullptr, {1.0, 100.0}, 2.0).verdict ==
          RateVerdict::slower);
}

TEST_CASE("fit: too few points or narrow window is inconclusive") {
    auto t = synthetic([](double g) { return std::pow(g, -2.0); }, 1.0, 100.0, 10);
    auto fit = fit_loglog(t, RateQuantity::f_gap, 0.0, nullptr, {1.0, 100.0}, 2.0);
    CHECK(fit.verdict == RateVerdict::inconclusive);
    CHECK(fit.note.find("30") != std::string::npos);

    auto t2 = synthetic([](double g) { return std::pow(g, -2.0); }, 1.0, 5.0, 100);
    auto fit2 = fit_loglog(t2, RateQuantity::f_gap, 0.0, nullptr, {1.0, 5.0}, 2.0);
    CHECK(fit2.verdict == RateVerdict::inconclusive);
    CHECK(fit2.note.find("decade") != std::string::npos);
}

TEST_CASE("fit: nonpositive values excluded and counted") {
    auto t = synthetic([](double g) { return std::pow(g, -2.0); }, 1.0, 1000.0, 100);
    t.points[5].f = 0.0;
    t.points[7].f = -1.0;
    auto fit = fit_loglog(t, RateQuantity::f_gap, 0.0, nullptr, {0.999, 1000.1}, 2.0);
    CHECK(fit.points_excluded == 2);
    CHECK(fit.points_used == 98);
}

TEST_CASE("noiseless quartic run: measured f-gap slope matches the flow prediction") {
    // Flow prediction for the quartic well: f decays like gamma^{-mu rhat}
    // with mu rhat = (4/3)(3/2) = 2. Early steps must not overshoot, so the
    // step sequence starts damped: alpha_n = (n + 100)^{-0.8}, an explicit
    // schedule reaching gamma ~ 67 over 1e6 steps.
    auto suite = builtin_suite();
    const auto& quartic = find_oracle(suite, "quartic");
    const std::size_t n_steps = 1'000'000;
    std::vector<double> steps(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i)
        steps[i] = std::pow(static_cast<double>(i) + 100.0, -0.8);
    auto sched = StepSchedule::explicit_steps(std::move(steps), 1.4);
    auto noise = NoiseProcess::none(1);
    RunOptions opts;
    opts.theta0 = {1.0};
    opts.max_iters = n_steps;
    auto traj = run(quartic, sched, noise, opts);
    REQUIRE(traj.status == RunStatus::completed);

    auto rep = predict_vs_measure(traj, 4.0 / 3.0, 1.4, 0.0);
    const auto& fgap = rep.entries[0].fit;
    CHECK(fgap.slope == Catch::Approx(-2.0).margin(0.15));
    CHECK_FALSE(rep.exponential_regime);

    // f * gamma^2 settles to a positive constant over the last decade.
    double lo = 1e300, hi = 0.0;
    for (const auto& p : traj.points) {
        if (p.gamma < rep.window.gamma_lo) continue;
        const double v = p.f * p.gamma * p.gamma;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo > 0.0);
    CHECK((hi - lo) / hi < 0.15);
}

TEST_CASE("noiseless quartic run: upper-bound form of the prediction") {
    // Bound check on a plain power law: slope <= -mu rhat + 0.3 for a run
    // reaching gamma >= 100.
    auto suite = builtin_suite();
    const auto& quartic = find_oracle(suite, "quartic");
    auto sched = StepSchedule::power_law(0.8, 1.0, 1.4);
    auto noise = NoiseProcess::none(1);
    RunOptions opts;
    opts.theta0 = {0.25};  // survives alpha_0 = 1
    opts.max_iters = 10'000'000;
    auto traj = run(quartic, sched, noise, opts);
    REQUIRE(traj.status == RunStatus::completed);
    REQUIRE(traj.points.back().gamma >= 100.0);
    auto rep = predict_vs_measure(traj, 4.0 / 3.0, 1.4, 0.0);
    CHECK(rep.entries[0].fit.slope <= -2.0 + 0.3);
}

TEST_CASE("noiseless quadratic run: exponential regime detected with flow slope") {
    auto suite = builtin_suite();
    const auto& quad = find_oracle(suite, "quadratic");
    auto sched = StepSchedule::power_law(0.8, 0.05, 1.4);
    auto noise = NoiseProcess::none(1);
    RunOptions opts;
    opts.theta0 = {1.0};
    opts.max_iters = 1'000'000;
    auto traj = run(quad, sched, noise, opts);
    auto rep = predict_vs_measure(traj, 2.0, 1.4, 0.0);
    CHECK(rep.exponential_regime);
    CHECK(rep.exp_slope == Catch::Approx(-4.0).epsilon(0.05));
}

TEST_CASE("noisy quadratic run: f-gap verdict is consistent or faster") {
    auto suite = builtin_suite();
    const auto& quad = find_oracle(suite, "quadratic");
    auto sched = StepSchedule::power_law(0.8, 1.0, 1.4);
    RunOptions opts;
    opts.theta0 = {1.0};
    opts.max_iters = 2'000'000;
    auto noise = NoiseProcess::iid_gaussian(1, 0.1, 12);
    auto traj = run(quad, sched, noise, opts);
    REQUIRE(traj.status == RunStatus::completed);
    auto rep = predict_vs_measure(traj, 2.0, 1.4, 0.0);  // p_hat = 2.8
    const auto v = rep.entries[0].fit.verdict;
    CHECK((v == RateVerdict::consistent || v == RateVerdict::faster));
}

TEST_CASE("noiseless quartic run: theta-gap bound against q_hat") {
    auto suite = builtin_suite();
    const auto& quartic = find_oracle(suite, "quartic");
    const std::size_t n_steps = 1'000'000;
    std::vector<double> steps(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i)
        steps[i] = std::pow(static_cast<double>(i) + 100.0, -0.8);
    auto sched = StepSchedule::explicit_steps(std::move(steps), 1.4);
    auto noise = NoiseProcess::none(1);
    RunOptions opts;
    opts.theta0 = {1.0};
    opts.max_iters = n_steps;
    opts.record_theta = true;
    auto traj = run(quartic, sched, noise, opts);
    auto rep = predict_vs_measure(traj, 4.0 / 3.0, 1.4, 0.0);
    REQUIRE(rep.entries.size() == 3);
    const auto& tg = rep.entries[2].fit;  // prediction: q_hat = rhat - 1 = 0.5
    CHECK((tg.verdict == RateVerdict::consistent || tg.verdict == RateVerdict::faster));
}
