#pragma once

#include "classdoa/kernels.hpp"

#include <cstdint>

namespace classdoa {

enum class BaselineMethod { nlls_ml, cbf };

const char* to_string(BaselineMethod m);

struct BaselineEstimate {
    RVec thetas;
    CMat amplitudes;
    BaselineMethod method = BaselineMethod::nlls_ml;
    double objective = 0.0;  // ||X - A S||_F^2 at the returned point
    bool flagged = false;    // NLLS: not converged; CBF: fewer than n peaks
    int iterations = 0;
};

struct NllsOptions {
    int multistart = 8;
    int max_iter = 200;
    double grad_tol = 1e-10;
    std::uint64_t seed = 7;
};

// ||P_perp(theta) X||_F^2 with S concentrated out.
double concentrated_cost(const CMat& X, const SteeringManifold& manifold, std::span<const double> thetas);

// Deterministic ML by nonlinear least squares: Levenberg-Marquardt on the
// concentrated cost from the best `multistart` CBF-peak initializations.
BaselineEstimate nlls_ml_estimate(const CMat& X, const SteeringManifold& manifold, int n,
                                  const NllsOptions& opts = {});

// Levenberg-Marquardt from one starting point.
BaselineEstimate nlls_refine(const CMat& X, const SteeringManifold& manifold, std::vector<double> start,
                             const NllsOptions& opts = {});

// Matched-filter spectrum ||a^H(theta) X||^2.
RVec cbf_spectrum(const CMat& X, const SteeringManifold& manifold, std::span<const double> thetas);

BaselineEstimate cbf_estimate(const CMat& X, const SteeringManifold& manifold, int n, double scan_fineness = 0.0);

}  // namespace classdoa
