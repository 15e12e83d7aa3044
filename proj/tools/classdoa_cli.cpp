#include "classdoa/baselines.hpp"
#include "classdoa/consistency.hpp"
#include "classdoa/experiments.hpp"
#include "classdoa/matrix_io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace classdoa;

namespace {

// Exit code for a run that produced output but did not certify.
constexpr int kCertificationFailed = 2;

ExperimentConfig build_config(const ExperimentConfig& base, const std::string& config_path,
                              const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = base;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config " + config_path);
        cfg = load_config(in, base);
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got " + kv);
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw std::runtime_error("cannot write " + path);
    return file;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous group-LASSO direction-of-arrival estimation and its performance analysis"};
    app.require_subcommand(1);

    // figure
    auto* fig = app.add_subcommand("figure", "Regenerate the data behind one of the figures as CSV");
    std::string fig_name, fig_config, fig_out;
    std::vector<std::string> fig_set;
    fig->add_option("name", fig_name, "lambda_moments | mse_vs_m | bias_vs_m | mse_vs_snr | var_vs_snr")->required();
    fig->add_option("-c,--config", fig_config, "key = value config file");
    fig->add_option("-s,--set", fig_set, "override a config key (key=value)");
    fig->add_option("-o,--out", fig_out, "CSV output path (default stdout)");

    // mc
    auto* mc = app.add_subcommand("mc", "Monte Carlo run of one scenario; per-trial CSV plus a summary");
    std::string mc_config, mc_out;
    std::vector<std::string> mc_set;
    mc->add_option("-c,--config", mc_config, "key = value config file");
    mc->add_option("-s,--set", mc_set, "override a config key (key=value)");
    mc->add_option("-o,--out", mc_out, "per-trial CSV path (default stdout)");

    // solve
    auto* solve = app.add_subcommand("solve", "Estimate positions from a data matrix file");
    std::string solve_in, solve_geom, solve_method = "class", solve_out;
    double solve_lambda = 0.0, solve_fineness = 0.0, solve_tol = 1e-8;
    int solve_grid = 0, solve_n = 0;
    bool solve_crosscheck = false;
    solve->add_option("input", solve_in, "data matrix (rows cols, then re,im tokens)")->required();
    solve->add_option("--method", solve_method, "class | ml | cbf")->check(CLI::IsMember({"class", "ml", "cbf"}));
    solve->add_option("--lambda", solve_lambda, "regularization (class); 0 selects the smallest lambda giving --n atoms");
    solve->add_option("--n", solve_n, "model order (ml, cbf, or lambda selection)");
    solve->add_option("--grid", solve_grid, "initial grid size (class)");
    solve->add_option("--verify-fineness", solve_fineness, "verification scan fineness in radians");
    solve->add_option("--tol", solve_tol, "certificate tolerance");
    solve->add_option("--geometry", solve_geom, "array geometry file (default: ULA with one sensor per row)");
    solve->add_flag("--crosscheck", solve_crosscheck, "rerun from a second grid and flag disagreement");
    solve->add_option("-o,--out", solve_out, "solution output path (default stdout)");

    // consistency
    auto* cons = app.add_subcommand("consistency", "Noiseless consistency check of a ULA scenario");
    int cons_m = 15;
    std::string cons_phis, cons_amps = "1,1", cons_curve;
    double cons_fineness = 0.0;
    cons->add_option("--m", cons_m, "number of sensors");
    cons->add_option("--phis", cons_phis, "comma-separated electrical angles (default: +-2pi/m)");
    cons->add_option("--amplitudes", cons_amps, "comma-separated real amplitudes");
    cons->add_option("--fineness", cons_fineness, "scan fineness in radians");
    cons->add_option("--curve", cons_curve, "write theta_or_delta,lhs_value CSV here");

    // threshold
    auto* thr = app.add_subcommand("threshold", "Search the asymptotic two-source resolution threshold");
    ThresholdOptions thr_opts;
    int thr_T = 1;
    double thr_curve_delta = 0.0;
    std::string thr_curve;
    thr->add_option("--draws", thr_opts.draws, "random Xi samples");
    thr->add_option("--seed", thr_opts.seed, "sampler seed");
    thr->add_option("--T", thr_T, "snapshot dimension of the sampled unit rows");
    thr->add_option("--tol", thr_opts.tol, "bisection tolerance on delta");
    thr->add_option("--curve", thr_curve, "write theta_or_delta,lhs_value CSV of the test function");
    thr->add_option("--curve-delta", thr_curve_delta, "separation for --curve (default: the threshold found)");

    // lambda-stats
    auto* ls = app.add_subcommand("lambda-stats", "Moments of the optimal regularization parameter");
    std::string ls_ms = "15", ls_mode = "asymptotic";
    int ls_T = 1, ls_trials = 2000;
    double ls_sigma = 1.0, ls_gamma = kFittedGamma;
    std::uint64_t ls_seed = 1;
    ls->add_option("--m", ls_ms, "comma-separated array sizes");
    ls->add_option("--T", ls_T, "snapshots");
    ls->add_option("--sigma", ls_sigma, "noise standard deviation");
    ls->add_option("--trials", ls_trials, "Monte Carlo trials");
    ls->add_option("--mode", ls_mode, "asymptotic | montecarlo")->check(CLI::IsMember({"asymptotic", "montecarlo"}));
    ls->add_option("--gamma", ls_gamma, "E(gamma) for the asymptotic mode");
    ls->add_option("--seed", ls_seed, "noise seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fig) {
            const Figure f = parse_figure(fig_name);
            const auto cfg = build_config(figure_preset(f), fig_config, fig_set);
            std::ofstream file;
            run_figure(f, cfg).write_csv(open_output(fig_out.empty() ? cfg.output : fig_out, file));
            return 0;
        }
        if (*mc) {
            const auto cfg = build_config(ExperimentConfig{}, mc_config, mc_set);
            if (cfg.ms.size() != 1 || cfg.sigmas.size() != 1)
                throw std::runtime_error("mc runs a single (m, sigma) point; use figure for sweeps");
            const auto res = run_montecarlo(cfg, cfg.ms.front(), cfg.sigmas.front());
            const int n = res.truth.order();
            std::ofstream file;
            std::ostream& out = open_output(mc_out.empty() ? cfg.output : mc_out, file);
            out << "trial,method";
            for (int i = 0; i < n; ++i) out << ",theta_" << i + 1 << ",error_" << i + 1;
            out << ",unmatched,lambda,certified\n" << std::setprecision(10);
            for (const auto& t : res.trials) {
                out << t.trial << ',' << to_string(t.method);
                for (int i = 0; i < n; ++i) out << ',' << t.thetas[i] << ',' << t.errors[i];
                out << ',' << t.unmatched << ',' << t.lambda << ',' << (t.certified ? 1 : 0) << '\n';
            }
            int failures = 0;
            std::cerr << "m=" << res.m << " sigma=" << res.sigma << " trials=" << cfg.trials << '\n';
            for (const auto& agg : res.aggregates) {
                failures += agg.certification_failures;
                std::cerr << to_string(agg.method) << ": outlier_rate=" << agg.outlier_rate
                          << " certification_failures=" << agg.certification_failures << '\n';
                for (int i = 0; i < n; ++i) {
                    const auto& s = agg.all[static_cast<std::size_t>(i)];
                    std::cerr << "  source " << i + 1 << ": bias=" << s.bias << " var=" << s.variance
                              << " mse=" << s.mse << " mse/sigma^2=" << s.mse / (res.sigma * res.sigma) << '\n';
                }
            }
            if (res.prediction)
                for (int i = 0; i < n; ++i)
                    std::cerr << "theory source " << i + 1 << ": bias=" << res.prediction->bias[i]
                              << " var=" << res.prediction->covariance(i, i) << '\n';
            return failures ? kCertificationFailed : 0;
        }
        if (*solve) {
            const CMat X = load_matrix_file(solve_in);
            SteeringManifold manifold = SteeringManifold::ula(static_cast<int>(X.rows()));
            if (!solve_geom.empty()) {
                std::ifstream g(solve_geom);
                if (!g) throw std::runtime_error("cannot open geometry " + solve_geom);
                manifold = load_geometry(g);
            }
            std::ofstream file;
            std::ostream& out = open_output(solve_out, file);
            if (solve_method == "class") {
                ClassOptions opts;
                opts.initial_grid_size = solve_grid;
                opts.verify_fineness = solve_fineness;
                opts.tol = solve_tol;
                ClassSolution sol;
                try {
                    if (solve_lambda > 0.0) {
                        sol = solve_crosscheck ? solve_class_crosschecked(X, manifold, solve_lambda, opts)
                                               : solve_class(X, manifold, solve_lambda, opts);
                    } else {
                        if (solve_n < 1) throw std::runtime_error("give --lambda or --n");
                        sol = select_class_lambda(X, manifold, solve_n, opts).solution;
                    }
                } catch (const ClassCertificationError& e) {
                    std::cerr << "certification failed: " << e.what() << '\n';
                    write_solution(out, e.best());
                    return kCertificationFailed;
                }
                write_solution(out, sol);
                if (sol.non_unique) std::cerr << "warning: solution is not unique (runs disagree)\n";
                return sol.certificate.passed ? 0 : kCertificationFailed;
            }
            if (solve_n < 1) throw std::runtime_error("--n is required for ml and cbf");
            const auto est = solve_method == "ml" ? nlls_ml_estimate(X, manifold, solve_n)
                                                  : cbf_estimate(X, manifold, solve_n, solve_fineness);
            out << "method " << to_string(est.method) << "\nobjective " << std::setprecision(17) << est.objective
                << "\nflagged " << (est.flagged ? 1 : 0) << "\nthetas\n";
            write_matrix(out, est.thetas.cast<cplx>());
            out << "amplitudes\n";
            write_matrix(out, est.amplitudes);
            return 0;
        }
        if (*cons) {
            const auto ula = SteeringManifold::ula(cons_m);
            ExperimentConfig cfg;
            cfg.amplitudes.clear();
            for (double a : parse_list(cons_amps)) cfg.amplitudes.push_back(a);
            if (!cons_phis.empty()) apply_setting(cfg, "phis", cons_phis);
            const auto truth = scenario_truth(cfg, cons_m);
            const auto v = check_consistency(ula, truth, cons_fineness);
            std::cout << "consistent=" << (v.consistent ? "true" : "false") << " worst_value=" << v.worst_value
                      << " worst_theta=" << v.worst_theta << " margin=" << v.margin << '\n';
            if (!cons_curve.empty()) {
                std::ofstream out(cons_curve);
                const ConsistencyFunction lhs(ula, build_expansion(ula, truth));
                out << "theta_or_delta,lhs_value\n" << std::setprecision(10);
                for (double t : scan_points(ula.domain(), cons_fineness > 0 ? cons_fineness : kPi / (64.0 * cons_m)))
                    out << t << ',' << lhs(t) << '\n';
            }
            return 0;
        }
        if (*thr) {
            const auto res = resolution_threshold_search(random_xi_sampler(thr_T), thr_opts);
            std::cout << "delta=" << res.delta << " delta_over_pi=" << res.delta / kPi
                      << " monotone=" << (res.monotone ? "true" : "false") << '\n';
            if (!thr_curve.empty()) {
                const double delta = thr_curve_delta > 0 ? thr_curve_delta : res.delta;
                std::mt19937_64 rng(thr_opts.seed);
                const auto xi = random_xi_sampler(thr_T)(rng);
                const AsymptoticTestFunction f(delta, xi);
                const auto worst = asymptotic_consistency_test(delta, xi, thr_opts.scan);
                std::ofstream out(thr_curve);
                out << "theta_or_delta,lhs_value\n" << std::setprecision(10);
                const DprimeScan& sc = thr_opts.scan;
                for (int i = 0; i < sc.points; ++i) {
                    const double dp = -sc.half_range + 2.0 * sc.half_range * i / (sc.points - 1);
                    out << dp << ',' << f(dp) << '\n';
                }
                std::cerr << "first-draw worst value at delta " << delta << ": " << worst.worst_value << '\n';
            }
            return 0;
        }
        if (*ls) {
            std::cout << "m,E_lambda,E_lambda_sq,source\n" << std::setprecision(10);
            for (double md : parse_list(ls_ms)) {
                const int m = static_cast<int>(md);
                LambdaMoments mom;
                if (ls_mode == "asymptotic") {
                    mom = extreme_value_moments(m, ls_T, ls_sigma, ls_gamma);
                    if (mom.regime_warning)
                        std::cerr << "warning: T is not small against ln m / ln ln m at m=" << m << '\n';
                } else {
                    ExperimentConfig cfg;
                    cfg.T = ls_T;
                    const auto ula = SteeringManifold::ula(m);
                    const auto e = build_expansion(ula, scenario_truth(cfg, m));
                    mom = montecarlo_lambda_moments(e, ula, NoiseModel::white(ls_sigma, ls_seed), ls_trials);
                }
                std::cout << m << ',' << mom.mean << ',' << mom.mean_square << ',' << to_string(mom.source) << '\n';
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
