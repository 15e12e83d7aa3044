#include "classdoa/experiments.hpp"

#include "classdoa/consistency.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace classdoa {

const char* to_string(Method m) {
    switch (m) {
        case Method::class_lasso: return "class";
        case Method::ml: return "ml";
        case Method::cbf: return "cbf";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "class") return Method::class_lasso;
    if (s == "ml") return Method::ml;
    if (s == "cbf") return Method::cbf;
    throw std::invalid_argument("unknown method '" + s + "' (expected class, ml or cbf)");
}

double sigma_from_snr_db(double snr_db) { return std::pow(10.0, -snr_db / 20.0); }
double snr_db_from_sigma(double sigma) { return -20.0 * std::log10(sigma); }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size()) throw std::invalid_argument("bad number '" + v + "' for " + key);
    return x;
}

int to_int(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x != std::floor(x)) throw std::invalid_argument("expected an integer for " + key);
    return static_cast<int>(x);
}

// "a+bj" / "a-bj" / "a" / "bj".
cplx to_complex(const std::string& key, const std::string& v) {
    if (v.empty()) throw std::invalid_argument("empty amplitude for " + key);
    if (v.back() != 'j') return to_double(key, v);
    const std::string body = v.substr(0, v.size() - 1);
    const auto pos = body.find_last_of("+-");
    if (pos == std::string::npos || pos == 0) return {0.0, body.empty() ? 1.0 : to_double(key, body)};
    return {to_double(key, body.substr(0, pos)), to_double(key, body.substr(pos))};
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "m") {
        cfg.ms.clear();
        for (const auto& s : split_list(v)) cfg.ms.push_back(to_int(key, s));
    } else if (key == "T") {
        cfg.T = to_int(key, v);
    } else if (key == "separation") {
        cfg.separation = v;
    } else if (key == "phis") {
        cfg.phis.clear();
        for (const auto& s : split_list(v)) cfg.phis.push_back(to_double(key, s));
        cfg.separation = "explicit";
    } else if (key == "amplitudes") {
        cfg.amplitudes.clear();
        for (const auto& s : split_list(v)) cfg.amplitudes.push_back(to_complex(key, s));
    } else if (key == "sigma") {
        cfg.sigmas.clear();
        for (const auto& s : split_list(v)) cfg.sigmas.push_back(to_double(key, s));
    } else if (key == "snr_db") {
        cfg.sigmas.clear();
        for (const auto& s : split_list(v)) cfg.sigmas.push_back(sigma_from_snr_db(to_double(key, s)));
    } else if (key == "trials") {
        cfg.trials = to_int(key, v);
    } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(to_double(key, v));
    } else if (key == "methods") {
        cfg.methods.clear();
        for (const auto& s : split_list(v)) cfg.methods.insert(parse_method(s));
    } else if (key == "output") {
        cfg.output = v;
    } else if (key == "moment_trials") {
        cfg.moment_trials = to_int(key, v);
    } else if (key == "outlier_factor") {
        cfg.outlier_factor = to_double(key, v);
    } else if (key == "require_consistent") {
        if (v != "true" && v != "false") throw std::invalid_argument("require_consistent must be true or false");
        cfg.require_consistent = v == "true";
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
    if (cfg.trials < 1) throw std::invalid_argument("trials must be positive");
    if (cfg.T < 1) throw std::invalid_argument("T must be positive");
}

ExperimentConfig load_config(std::istream& in, ExperimentConfig cfg) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return cfg;
}

SparseRepresentation scenario_truth(const ExperimentConfig& cfg, int m) {
    std::vector<double> phis;
    if (cfg.separation == "twice-rayleigh") {
        const double d = 4.0 * kPi / m;
        phis = {-0.5 * d, 0.5 * d};
    } else if (cfg.separation == "explicit") {
        phis = cfg.phis;
    } else {
        // A numeric separation in units of pi/m.
        const double d = to_double("separation", cfg.separation) * kPi / m;
        phis = {-0.5 * d, 0.5 * d};
    }
    if (phis.empty()) throw std::invalid_argument("scenario has no sources");
    if (cfg.amplitudes.size() != phis.size())
        throw std::invalid_argument("scenario needs one amplitude per source");
    SparseRepresentation truth;
    truth.thetas = Eigen::Map<RVec>(phis.data(), static_cast<Eigen::Index>(phis.size()));
    truth.amplitudes.resize(static_cast<Eigen::Index>(phis.size()), cfg.T);
    for (std::size_t i = 0; i < phis.size(); ++i)
        truth.amplitudes.row(static_cast<Eigen::Index>(i)).setConstant(cfg.amplitudes[i]);
    return truth;
}

LambdaSelection select_class_lambda(const CMat& X, const SteeringManifold& manifold, int n, const ClassOptions& opts,
                                    double rel_tol) {
    const double zeta = opts.verify_fineness > 0 ? opts.verify_fineness : default_verify_fineness(manifold);
    const double lmax = dual_peak(manifold, X, zeta).value;
    LambdaSelection out;
    if (!(lmax > 0.0)) {
        out.solution = solve_class(X, manifold, 1.0, opts);
        out.exact_order = n == 0;
        return out;
    }
    auto solve = [&](double lam, const SparseRepresentation* warm) {
        try {
            return solve_class(X, manifold, lam, opts, warm);
        } catch (const ClassCertificationError& e) {
            return e.best();
        }
    };
    std::optional<ClassSolution> good, above;
    double lam_bad = 0.0;
    ClassSolution prev = solve(lmax * 0.999, nullptr);
    for (int k = 1; k <= 60; ++k) {
        const double lam = lmax * std::ldexp(1.0, -k);
        ClassSolution s = solve(lam, prev.representation.order() ? &prev.representation : nullptr);
        const int order = s.representation.order();
        if (order > n) {
            lam_bad = lam;
            break;
        }
        if (order == n) good = s;
        else above = s;
        prev = std::move(s);
    }
    if (!good) {
        out.exact_order = false;
        out.solution = above ? *above : prev;
        return out;
    }
    if (lam_bad > 0.0) {
        double lo = lam_bad, hi = good->lambda;
        while (hi / lo > 1.0 + rel_tol) {
            const double mid = std::sqrt(lo * hi);
            ClassSolution s = solve(mid, &good->representation);
            if (s.representation.order() == n) {
                hi = mid;
                good = std::move(s);
            } else {
                lo = mid;
            }
        }
    }
    out.solution = std::move(*good);
    return out;
}

std::vector<int> match_estimates(const SteeringManifold& manifold, const RVec& truth, const RVec& est) {
    const int n = static_cast<int>(truth.size());
    const int k = static_cast<int>(est.size());
    std::vector<int> best(static_cast<std::size_t>(n), -1);
    if (n == 0 || k == 0) return best;
    // Exhaustive search over injective assignments; n and k are small here.
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<int> cur(static_cast<std::size_t>(n), -1);
    std::vector<bool> used(static_cast<std::size_t>(k), false);
    const int slots = std::min(n, k);
    std::function<void(int, int, double)> rec = [&](int i, int assigned, double cost) {
        if (cost >= best_cost) return;
        if (i == n) {
            if (assigned == slots) {
                best_cost = cost;
                best = cur;
            }
            return;
        }
        // Leave truth i unmatched only when there are fewer estimates.
        if (n - i > slots - assigned) {
            cur[static_cast<std::size_t>(i)] = -1;
            rec(i + 1, assigned, cost);
        }
        for (int j = 0; j < k; ++j) {
            if (used[static_cast<std::size_t>(j)]) continue;
            used[static_cast<std::size_t>(j)] = true;
            cur[static_cast<std::size_t>(i)] = j;
            rec(i + 1, assigned + 1, cost + std::abs(manifold.difference(est[j], truth[i])));
            used[static_cast<std::size_t>(j)] = false;
        }
        cur[static_cast<std::size_t>(i)] = -1;
    };
    rec(0, 0, 0.0);
    return best;
}

std::vector<SourceStats> summarize(const std::vector<RVec>& errors, int n) {
    std::vector<SourceStats> st(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& s = st[static_cast<std::size_t>(i)];
        for (const auto& e : errors)
            if (std::isfinite(e[i])) {
                s.bias += e[i];
                ++s.count;
            }
        if (s.count == 0) {
            s.bias = s.variance = s.mse = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        s.bias /= s.count;
        for (const auto& e : errors)
            if (std::isfinite(e[i])) {
                s.variance += (e[i] - s.bias) * (e[i] - s.bias);
                s.mse += e[i] * e[i];
            }
        s.variance /= s.count;
        s.mse /= s.count;
    }
    return st;
}

const MethodAggregate& MonteCarloResult::aggregate(Method m) const {
    for (const auto& a : aggregates)
        if (a.method == m) return a;
    throw std::invalid_argument(std::string("method not run: ") + to_string(m));
}

namespace {

// Lambda moments at sigma = 1 per array size; they scale with sigma.
LambdaMoments unit_moments(const ExperimentConfig& cfg, const PerturbationExpansion& e,
                           const SteeringManifold& manifold) {
    const NoiseModel unit = NoiseModel::white(1.0, cfg.seed ^ 0x5eedULL);
    if (manifold.size() < 64) return montecarlo_lambda_moments(e, manifold, unit, cfg.moment_trials);
    return extreme_value_moments(manifold.size(), cfg.T, 1.0);
}

TrialResult run_trial(Method method, const CMat& X, const SteeringManifold& manifold, const RVec& truth, int trial) {
    TrialResult r;
    r.trial = trial;
    r.method = method;
    const int n = static_cast<int>(truth.size());
    RVec est;
    switch (method) {
        case Method::class_lasso: {
            const auto sel = select_class_lambda(X, manifold, n);
            est = sel.solution.representation.thetas;
            r.lambda = sel.solution.lambda;
            r.certified = sel.solution.certificate.passed;
            r.flagged = !sel.exact_order;
            break;
        }
        case Method::ml: {
            const auto b = nlls_ml_estimate(X, manifold, n);
            est = b.thetas;
            r.flagged = b.flagged;
            break;
        }
        case Method::cbf: {
            const auto b = cbf_estimate(X, manifold, n);
            est = b.thetas;
            r.flagged = b.flagged;
            break;
        }
    }
    const auto assign = match_estimates(manifold, truth, est);
    r.thetas = RVec::Constant(n, std::numeric_limits<double>::quiet_NaN());
    r.errors = r.thetas;
    int matched = 0;
    for (int i = 0; i < n; ++i) {
        const int j = assign[static_cast<std::size_t>(i)];
        if (j < 0) continue;
        r.thetas[i] = est[j];
        r.errors[i] = manifold.difference(est[j], truth[i]);
        ++matched;
    }
    r.unmatched = static_cast<int>(est.size()) - matched;
    return r;
}

}  // namespace

MonteCarloResult run_montecarlo(const ExperimentConfig& cfg, int m, double sigma) {
    const auto manifold = SteeringManifold::ula(m);
    MonteCarloResult res;
    res.m = m;
    res.sigma = sigma;
    res.truth = scenario_truth(cfg, m);
    const int n = res.truth.order();

    std::optional<PerturbationExpansion> e;
    try {
        e = build_expansion(manifold, res.truth);
    } catch (const SingularExpansionError&) {
        if (cfg.require_consistent) throw;
    }
    if (e) {
        const auto v = check_consistency(manifold, res.truth);
        if (!v.consistent) {
            if (cfg.require_consistent)
                throw std::invalid_argument("scenario is not consistent (bound " + std::to_string(v.worst_value) +
                                            " at " + std::to_string(v.worst_theta) +
                                            "); the pure-case analysis does not apply");
            e.reset();
        }
    }
    if (e) {
        LambdaMoments mom = unit_moments(cfg, *e, manifold);
        mom.mean *= sigma;
        mom.mean_square *= sigma * sigma;
        res.prediction = predict_performance(*e, manifold, NoiseModel::white(sigma, 0), mom);
    }

    const std::vector<Method> methods(cfg.methods.begin(), cfg.methods.end());
    const int M = static_cast<int>(methods.size());
    const NoiseModel noise = NoiseModel::white(sigma, cfg.seed + 7919ULL * static_cast<std::uint64_t>(m));
    res.trials.resize(static_cast<std::size_t>(cfg.trials * M));
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < cfg.trials; ++t) {
        try {
            const auto obs = generate_observation(manifold, res.truth, noise, cfg.T, static_cast<std::uint64_t>(t));
            for (int k = 0; k < M; ++k)
                res.trials[static_cast<std::size_t>(t * M + k)] =
                    run_trial(methods[static_cast<std::size_t>(k)], obs.X, manifold, res.truth.thetas, t);
        } catch (...) {
#pragma omp critical(classdoa_trial_error)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);

    RVec limit = RVec::Constant(n, std::numeric_limits<double>::infinity());
    if (res.prediction) limit = cfg.outlier_factor * res.prediction->covariance.diagonal().cwiseSqrt();
    for (int k = 0; k < M; ++k) {
        MethodAggregate agg;
        agg.method = methods[static_cast<std::size_t>(k)];
        std::vector<RVec> all, in;
        int outliers = 0;
        for (int t = 0; t < cfg.trials; ++t) {
            const auto& tr = res.trials[static_cast<std::size_t>(t * M + k)];
            if (!tr.certified) ++agg.certification_failures;
            all.push_back(tr.errors);
            bool out = tr.unmatched > 0;
            for (int i = 0; i < n; ++i) out = out || !std::isfinite(tr.errors[i]) || std::abs(tr.errors[i]) > limit[i];
            if (out) ++outliers;
            else in.push_back(tr.errors);
        }
        agg.all = summarize(all, n);
        agg.inliers = summarize(in, n);
        agg.outlier_rate = static_cast<double>(outliers) / cfg.trials;
        res.aggregates.push_back(std::move(agg));
    }
    return res;
}

void Dataset::write_csv(std::ostream& out) const {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    char buf[64];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.10g", row[i]);
            out << (i ? "," : "") << buf;
        }
        out << '\n';
    }
}

Figure parse_figure(const std::string& s) {
    if (s == "lambda_moments") return Figure::lambda_moments;
    if (s == "mse_vs_m") return Figure::mse_vs_m;
    if (s == "bias_vs_m") return Figure::bias_vs_m;
    if (s == "mse_vs_snr") return Figure::mse_vs_snr;
    if (s == "var_vs_snr") return Figure::var_vs_snr;
    throw std::invalid_argument("unknown figure '" + s + "'");
}

const char* to_string(Figure f) {
    switch (f) {
        case Figure::lambda_moments: return "lambda_moments";
        case Figure::mse_vs_m: return "mse_vs_m";
        case Figure::bias_vs_m: return "bias_vs_m";
        case Figure::mse_vs_snr: return "mse_vs_snr";
        case Figure::var_vs_snr: return "var_vs_snr";
    }
    return "?";
}

ExperimentConfig figure_preset(Figure f) {
    ExperimentConfig cfg;
    switch (f) {
        case Figure::lambda_moments:
            cfg.ms = {32, 64, 128, 256, 512, 1024};
            cfg.sigmas = {1.0};
            cfg.trials = 2000;
            break;
        case Figure::mse_vs_m:
        case Figure::bias_vs_m:
            cfg.ms = {10, 15, 20, 30, 40, 50};
            cfg.sigmas = {1e-3};
            cfg.trials = 1000;
            break;
        case Figure::mse_vs_snr:
        case Figure::var_vs_snr:
            cfg.ms = {15};
            cfg.sigmas.clear();
            for (int s = 0; s <= 40; s += 5) cfg.sigmas.push_back(sigma_from_snr_db(s));
            cfg.trials = 100;
            cfg.methods = {Method::class_lasso, Method::ml, Method::cbf};
            break;
    }
    return cfg;
}

namespace {

Dataset lambda_moments_figure(const ExperimentConfig& cfg) {
    Dataset d;
    d.header = {"m", "trials", "E_lambda_sq_norm", "E_lambda_norm", "grid_max_sq_norm", "theory_euler", "theory_fit"};
    const double sigma = cfg.sigmas.empty() ? 1.0 : cfg.sigmas.front();
    for (int m : cfg.ms) {
        const auto ula = SteeringManifold::ula(m);
        const NoiseModel noise = NoiseModel::white(sigma, cfg.seed + 104729ULL * static_cast<std::uint64_t>(m));
        std::vector<double> lam(static_cast<std::size_t>(cfg.trials)), grid(lam.size());
#pragma omp parallel for schedule(static)
        for (int t = 0; t < cfg.trials; ++t) {
            const CMat N = draw_noise(m, cfg.T, noise, static_cast<std::uint64_t>(t));
            lam[static_cast<std::size_t>(t)] = lambda_approx_ula_fft(ula, N);
            grid[static_cast<std::size_t>(t)] = ula_grid_max_sq(N);
        }
        double s1 = 0, s2 = 0, g = 0;
        for (std::size_t t = 0; t < lam.size(); ++t) {
            s1 += lam[t];
            s2 += lam[t] * lam[t];
            g += grid[t];
        }
        const double norm = sigma * sigma * m;
        const double n = cfg.trials;
        d.rows.push_back({static_cast<double>(m), n, s2 / n / norm, s1 / n / std::sqrt(norm), g / n / norm,
                          extreme_value_moments(m, cfg.T, 1.0, kEulerGamma).mean_square / m,
                          extreme_value_moments(m, cfg.T, 1.0, kFittedGamma).mean_square / m});
    }
    return d;
}

}  // namespace

Dataset run_figure(Figure which, const ExperimentConfig& cfg) {
    if (which == Figure::lambda_moments) return lambda_moments_figure(cfg);
    const bool sweep_m = which == Figure::mse_vs_m || which == Figure::bias_vs_m;
    if (!sweep_m && cfg.ms.size() != 1) throw std::invalid_argument("SNR sweeps need a single array size");
    if (sweep_m && cfg.sigmas.size() != 1) throw std::invalid_argument("array-size sweeps need a single sigma");

    const int n = scenario_truth(cfg, cfg.ms.front()).order();
    Dataset d;
    d.header = {sweep_m ? "m" : "snr_db", "sigma"};
    const std::vector<Method> methods(cfg.methods.begin(), cfg.methods.end());
    auto src = [](const std::string& s, int i) { return s + "_" + std::to_string(i + 1); };
    for (Method mth : methods) {
        const std::string p = to_string(mth);
        for (int i = 0; i < n; ++i) {
            switch (which) {
                case Figure::mse_vs_m:
                    d.header.push_back(src(p + "_mse", i));
                    d.header.push_back(src(p + "_mse_norm", i));
                    break;
                case Figure::bias_vs_m: d.header.push_back(src(p + "_bias_norm", i)); break;
                case Figure::mse_vs_snr: d.header.push_back(src(p + "_mse", i)); break;
                case Figure::var_vs_snr: d.header.push_back(src(p + "_var", i)); break;
                default: break;
            }
        }
        d.header.push_back(p + "_outlier_rate");
    }
    for (int i = 0; i < n; ++i) {
        switch (which) {
            case Figure::mse_vs_m:
                d.header.push_back(src("theory_mse", i));
                d.header.push_back(src("theory_mse_norm", i));
                break;
            case Figure::bias_vs_m: d.header.push_back(src("theory_bias_norm", i)); break;
            case Figure::mse_vs_snr: d.header.push_back(src("theory_mse", i)); break;
            case Figure::var_vs_snr: d.header.push_back(src("theory_var", i)); break;
            default: break;
        }
    }

    std::vector<std::pair<int, double>> points;
    for (int m : cfg.ms)
        for (double s : cfg.sigmas) points.emplace_back(m, s);
    for (const auto& [m, sigma] : points) {
        ExperimentConfig c = cfg;
        // Low-SNR points leave the small-noise regime; run them anyway.
        if (!sweep_m) c.require_consistent = false;
        const auto res = run_montecarlo(c, m, sigma);
        std::vector<double> row{sweep_m ? static_cast<double>(m) : snr_db_from_sigma(sigma), sigma};
        const double s2 = sigma * sigma;
        for (Method mth : methods) {
            const auto& agg = res.aggregate(mth);
            for (int i = 0; i < n; ++i) {
                const auto& st = agg.all[static_cast<std::size_t>(i)];
                switch (which) {
                    case Figure::mse_vs_m:
                        row.push_back(st.mse);
                        row.push_back(st.mse / s2);
                        break;
                    case Figure::bias_vs_m: row.push_back(st.bias / sigma); break;
                    case Figure::mse_vs_snr: row.push_back(st.mse); break;
                    case Figure::var_vs_snr: row.push_back(st.variance); break;
                    default: break;
                }
            }
            row.push_back(agg.outlier_rate);
        }
        for (int i = 0; i < n; ++i) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            const double b = res.prediction ? res.prediction->bias[i] : nan;
            const double v = res.prediction ? res.prediction->covariance(i, i) : nan;
            switch (which) {
                case Figure::mse_vs_m:
                    row.push_back(b * b + v);
                    row.push_back((b * b + v) / s2);
                    break;
                case Figure::bias_vs_m: row.push_back(b / sigma); break;
                case Figure::mse_vs_snr: row.push_back(b * b + v); break;
                case Figure::var_vs_snr: row.push_back(v); break;
                default: break;
            }
        }
        d.rows.push_back(std::move(row));
    }
    return d;
}

}  // namespace classdoa
