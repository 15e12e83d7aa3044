#include "classdoa/experiments.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

using namespace classdoa;
using doctest::Approx;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.ms = {10};
    cfg.trials = 6;
    cfg.sigmas = {1e-3};
    cfg.moment_trials = 100;
    cfg.methods = {Method::class_lasso, Method::ml, Method::cbf};
    return cfg;
}

}  // namespace

TEST_CASE("snr conversion") {
    CHECK(sigma_from_snr_db(20.0) == Approx(0.1));
    CHECK(sigma_from_snr_db(0.0) == 1.0);
    CHECK(snr_db_from_sigma(1e-3) == Approx(60.0));
}

TEST_CASE("config parsing") {
    std::istringstream in(
        "# sweep\n"
        "m = 8, 12\n"
        "T = 2\n"
        "amplitudes = 1, 0.5-0.25j, 2j\n"
        "phis = -0.5, 0.1, 0.9   # explicit\n"
        "snr_db = 0, 20\n"
        "methods = class, cbf\n"
        "trials = 7\n");
    const auto cfg = load_config(in);
    CHECK(cfg.ms == std::vector<int>{8, 12});
    CHECK(cfg.T == 2);
    CHECK(cfg.amplitudes[1] == cplx(0.5, -0.25));
    CHECK(cfg.amplitudes[2] == cplx(0.0, 2.0));
    CHECK(cfg.separation == "explicit");
    CHECK(cfg.sigmas[1] == Approx(0.1));
    CHECK(cfg.methods == std::set<Method>{Method::class_lasso, Method::cbf});
    CHECK(cfg.trials == 7);
    CHECK(cfg.seed == ExperimentConfig{}.seed);

    std::istringstream bad("colour = red\n");
    CHECK_THROWS_AS(load_config(bad), std::invalid_argument);
    ExperimentConfig c;
    CHECK_THROWS(apply_setting(c, "trials", "abc"));
    CHECK_THROWS(apply_setting(c, "trials", "0"));
}

TEST_CASE("twice-rayleigh preset") {
    ExperimentConfig cfg;
    const auto t = scenario_truth(cfg, 15);
    REQUIRE(t.order() == 2);
    CHECK(t.thetas[1] - t.thetas[0] == Approx(4 * kPi / 15));
    CHECK(t.amplitudes.cols() == 1);
    cfg.T = 3;
    CHECK(scenario_truth(cfg, 15).amplitudes.cols() == 3);
}

TEST_CASE("matching is a minimum-cost assignment") {
    const auto ula = SteeringManifold::ula(8);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-kPi, kPi);
    for (int k = 0; k < 50; ++k) {
        RVec truth(3), est(3);
        for (int i = 0; i < 3; ++i) truth[i] = u(rng), est[i] = u(rng);
        const auto a = match_estimates(ula, truth, est);
        double cost = 0;
        for (int i = 0; i < 3; ++i) cost += std::abs(ula.difference(est[a[i]], truth[i]));
        std::vector<int> p{0, 1, 2};
        double best = INFINITY;
        do {
            double c = 0;
            for (int i = 0; i < 3; ++i) c += std::abs(ula.difference(est[p[i]], truth[i]));
            best = std::min(best, c);
        } while (std::next_permutation(p.begin(), p.end()));
        CHECK(cost == Approx(best));
    }
    RVec truth(2), one(1);
    truth << -1, 1;
    one << 0.9;
    const auto a = match_estimates(ula, truth, one);
    CHECK(a == std::vector<int>{-1, 0});
}

TEST_CASE("aggregate MSE decomposes into bias and variance") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.3, 1.0);
    std::vector<RVec> errs;
    for (int k = 0; k < 100; ++k) errs.push_back(RVec::NullaryExpr(2, [&](Eigen::Index) { return g(rng); }));
    errs[5][1] = std::numeric_limits<double>::quiet_NaN();
    const auto st = summarize(errs, 2);
    for (const auto& s : st) CHECK(s.mse == Approx(s.bias * s.bias + s.variance).epsilon(1e-12));
    CHECK(st[0].count == 100);
    CHECK(st[1].count == 99);
}

TEST_CASE("lambda selection picks the smallest lambda keeping the order") {
    const int m = 15;
    const auto ula = SteeringManifold::ula(m);
    ExperimentConfig cfg;
    const auto truth = scenario_truth(cfg, m);
    const auto obs = generate_observation(ula, truth, NoiseModel::white(1e-3, 3), 1);
    const auto sel = select_class_lambda(obs.X, ula, 2);
    CHECK(sel.exact_order);
    CHECK(sel.solution.representation.order() == 2);
    CHECK(sel.solution.certificate.passed);
    const auto below = solve_class(obs.X, ula, sel.solution.lambda * (1 - 1e-3));
    CHECK(below.representation.order() > 2);
}

TEST_CASE("monte carlo runs are reproducible") {
    auto cfg = small_config();
    const auto a = run_montecarlo(cfg, 10, 1e-3);
    const auto b = run_montecarlo(cfg, 10, 1e-3);
    REQUIRE(a.trials.size() == b.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
        CHECK(a.trials[i].method == b.trials[i].method);
        CHECK(a.trials[i].errors == b.trials[i].errors);
    }
    CHECK(a.prediction.has_value());
    for (const auto& agg : a.aggregates) {
        CHECK(agg.certification_failures == 0);
        for (const auto& s : agg.all) CHECK(s.mse == Approx(s.bias * s.bias + s.variance).epsilon(1e-12));
    }
    cfg.trials = 1;
    const auto one = run_montecarlo(cfg, 10, 1e-3);
    CHECK(one.trials[0].errors == a.trials[0].errors);
}

TEST_CASE("noiseless trials have negligible error") {
    auto cfg = small_config();
    cfg.trials = 2;
    const auto r = run_montecarlo(cfg, 10, 0.0);
    for (const auto& t : r.trials) {
        if (t.method == Method::cbf) continue;
        CHECK(t.errors.cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("inconsistent scenarios are rejected before running") {
    auto cfg = small_config();
    cfg.separation = "explicit";
    cfg.phis = {-0.05, 0.05};
    CHECK_THROWS_AS(run_montecarlo(cfg, 10, 1e-3), std::invalid_argument);
    cfg.require_consistent = false;
    CHECK_NOTHROW(run_montecarlo(cfg, 10, 1e-3));
}

TEST_CASE("figure datasets are deterministic CSV") {
    auto cfg = figure_preset(Figure::mse_vs_m);
    cfg.ms = {10};
    cfg.trials = 4;
    cfg.moment_trials = 50;
    const auto a = run_figure(Figure::mse_vs_m, cfg);
    const auto b = run_figure(Figure::mse_vs_m, cfg);
    std::ostringstream sa, sb;
    a.write_csv(sa);
    b.write_csv(sb);
    CHECK(sa.str() == sb.str());
    CHECK(a.header.front() == "m");
    CHECK(a.rows.size() == 1);
    CHECK(a.rows[0].size() == a.header.size());

    auto lm = figure_preset(Figure::lambda_moments);
    lm.ms = {32, 64};
    lm.trials = 50;
    const auto d = run_figure(Figure::lambda_moments, lm);
    CHECK(d.rows.size() == 2);
    CHECK(parse_figure("var_vs_snr") == Figure::var_vs_snr);
    CHECK_THROWS(parse_figure("fig9"));
}
