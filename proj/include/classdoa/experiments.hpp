#pragma once

#include "classdoa/baselines.hpp"
#include "classdoa/class_estimator.hpp"
#include "classdoa/performance.hpp"

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace classdoa {

enum class Method { class_lasso, ml, cbf };

const char* to_string(Method m);
Method parse_method(const std::string& s);

// SNR(dB) = 10 log10(|s|^2 / sigma^2) with unit source amplitude.
double sigma_from_snr_db(double snr_db);
double snr_db_from_sigma(double sigma);

struct ExperimentConfig {
    std::vector<int> ms{15};
    int T = 1;
    // "twice-rayleigh" puts two sources at -2pi/m and +2pi/m; otherwise the
    // explicit electrical angles in `phis` are used.
    std::string separation = "twice-rayleigh";
    std::vector<double> phis;
    std::vector<cplx> amplitudes{1.0, 1.0};
    std::vector<double> sigmas{1e-3};
    int trials = 1000;
    std::uint64_t seed = 2024;
    std::set<Method> methods{Method::class_lasso, Method::ml};
    std::string output;
    int moment_trials = 2000;  // Monte Carlo lambda moments for m < 64
    double outlier_factor = 10.0;
    bool require_consistent = true;
};

// Applies one `key = value` setting; throws std::invalid_argument on unknown
// keys or malformed values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Key-value config file: one `key = value` per line, '#' comments. Keys the
// file does not mention keep their value from `base`.
ExperimentConfig load_config(std::istream& in, ExperimentConfig base = {});

// The true support for array size m under the config's separation rule.
SparseRepresentation scenario_truth(const ExperimentConfig& cfg, int m);

struct TrialResult {
    int trial = 0;
    Method method = Method::class_lasso;
    RVec thetas;        // matched to the truth order; NaN where a source was missed
    RVec errors;        // signed, wrapped
    int unmatched = 0;  // estimates left over after assignment
    double lambda = 0.0;
    bool certified = true;
    bool flagged = false;
};

struct SourceStats {
    double bias = 0.0;
    double variance = 0.0;
    double mse = 0.0;
    int count = 0;
};

struct MethodAggregate {
    Method method = Method::class_lasso;
    std::vector<SourceStats> all;       // every matched trial
    std::vector<SourceStats> inliers;   // errors within outlier_factor * predicted std
    double outlier_rate = 0.0;
    int certification_failures = 0;
};

struct MonteCarloResult {
    int m = 0;
    double sigma = 0.0;
    SparseRepresentation truth;
    std::optional<PerformancePrediction> prediction;
    std::vector<TrialResult> trials;  // ordered by (trial, method)
    std::vector<MethodAggregate> aggregates;

    const MethodAggregate& aggregate(Method m) const;
};

// Smallest certified lambda whose CLASS estimate has exactly n atoms: a
// halving ladder from lambda_max until the order exceeds n, then geometric
// bisection to `rel_tol`.
struct LambdaSelection {
    ClassSolution solution;
    bool exact_order = true;
};
LambdaSelection select_class_lambda(const CMat& X, const SteeringManifold& manifold, int n,
                                    const ClassOptions& opts = {}, double rel_tol = 1e-4);

// Minimum-cost assignment of estimates to true positions (|wrapped error| sum).
std::vector<int> match_estimates(const SteeringManifold& manifold, const RVec& truth, const RVec& estimate);

std::vector<SourceStats> summarize(const std::vector<RVec>& errors, int n);

MonteCarloResult run_montecarlo(const ExperimentConfig& cfg, int m, double sigma);

struct Dataset {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    void write_csv(std::ostream& out) const;
};

enum class Figure { lambda_moments, mse_vs_m, bias_vs_m, mse_vs_snr, var_vs_snr };

Figure parse_figure(const std::string& s);
const char* to_string(Figure f);

// Preset configuration for each figure.
ExperimentConfig figure_preset(Figure f);

Dataset run_figure(Figure which, const ExperimentConfig& cfg);

}  // namespace classdoa
