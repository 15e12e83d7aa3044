#pragma once

#include "classdoa/kernels.hpp"
#include "classdoa/perturbation.hpp"

namespace classdoa {

enum class MomentSource { gumbel_theory, empirical_fit, user, montecarlo };

const char* to_string(MomentSource s);

inline constexpr double kEulerGamma = 0.5772156649015329;
inline constexpr double kFittedGamma = 1.3;

struct LambdaMoments {
    double mean = 0.0;
    double mean_square = 0.0;
    double gamma_expectation = kFittedGamma;
    MomentSource source = MomentSource::empirical_fit;
    // T is not small against ln m / ln ln m, where the asymptotics degrade.
    bool regime_warning = false;

    double variance() const { return std::max(0.0, mean_square - mean * mean); }
};

struct PerformancePrediction {
    RVec bias;
    RMat covariance;
    LambdaMoments lambda_moments;
    double sigma = 0.0;
};

// Per-theta smallest lambda' for which the linearized estimate keeps
// ||a^H(theta) N_hat|| <= lambda' at theta. Infinite where no lambda' works.
class LambdaProfile {
public:
    LambdaProfile(const SteeringManifold& manifold, const PerturbationExpansion& exp, const CMat& N);
    double operator()(double theta) const;

    // c(theta) and d(theta) with a^H N_hat = c + lambda' d.
    void terms(double theta, CRowVec& c, CRowVec& d) const;

    static constexpr double kSupportExclusion = 1e-5;

private:
    const SteeringManifold* manifold_;
    const PerturbationExpansion* exp_;
    CMat Cm_;  // a^H Cm = c
    CMat Dm_;  // a^H Dm = d
};

// Smallest lambda keeping the linearized estimate optimal: the maximum of
// the per-theta profile. Throws when that maximum is infinite.
double optimal_lambda_exact(const PerturbationExpansion& exp, const SteeringManifold& manifold, const CMat& N,
                            double scan_fineness = 0.0);

// Dominant-term approximation max_theta ||a^H(theta) N||.
double lambda_approx(const SteeringManifold& manifold, const CMat& N, double scan_fineness = 0.0);

// ULA shortcut for lambda_approx: zero-padded FFT at `oversample` points per
// beam spacing, then Newton polish of the near-top peaks.
double lambda_approx_ula_fft(const SteeringManifold& ula, const CMat& N, int oversample = 8);

// max over the m orthogonal ULA beams phi_k = 2 pi k / m of ||a^H(phi_k) N||^2.
double ula_grid_max_sq(const CMat& N);

// Large-m moments of the optimal lambda for white noise. Throws for m < 3.
LambdaMoments extreme_value_moments(int m, int T, double sigma, double gamma_expectation = kFittedGamma);

// Sample moments of optimal_lambda_exact over `trials` noise draws.
LambdaMoments montecarlo_lambda_moments(const PerturbationExpansion& exp, const SteeringManifold& manifold,
                                        const NoiseModel& noise, int trials, double scan_fineness = 0.0);

// Picks the Monte Carlo moments for small arrays and the asymptotic ones
// otherwise.
LambdaMoments default_lambda_moments(const PerturbationExpansion& exp, const SteeringManifold& manifold,
                                     const NoiseModel& noise, int mc_trials = 2000);

PerformancePrediction predict_performance(const PerturbationExpansion& exp, const SteeringManifold& manifold,
                                          const NoiseModel& noise, const LambdaMoments& moments);

}  // namespace classdoa
