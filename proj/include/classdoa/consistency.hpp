#pragma once

#include "classdoa/kernels.hpp"
#include "classdoa/perturbation.hpp"

#include <Eigen/Dense>
#include <functional>
#include <random>

namespace classdoa {

struct ConsistencyVerdict {
    bool consistent = false;
    double worst_theta = 0.0;
    double worst_value = 0.0;
    double margin = 0.0;  // 1 - worst_value
};

// Left side of the noiseless consistency bound,
//     ||a^H(theta) (P D D0 - A (A^H A)^-1) Xi^(1/2)||,  D0 = diag(Gamma beta).
// It equals 1 on the true support.
class ConsistencyFunction {
public:
    ConsistencyFunction(const SteeringManifold& manifold, const PerturbationExpansion& exp);
    double operator()(double theta) const;

private:
    const SteeringManifold* manifold_;
    CMat M_;
};

ConsistencyVerdict check_consistency(const SteeringManifold& manifold, const SparseRepresentation& truth,
                                     double scan_fineness = 0.0, double tol = 1e-6);

// Limits of normalized ULA inner products at scaled separation x:
//     F(x) = (e^{jx} - 1) / (jx),  G = F',  H = -G'.
cplx kernel_F(double x);
cplx kernel_G(double x);
cplx kernel_H(double x);

struct AsymptoticKernels {
    double delta = 0.0;
    Eigen::Matrix2cd F, G, H;

    // Row vectors at offset dprime: [F(dprime), F(dprime + delta)] and the
    // same for G.
    Eigen::RowVector2cd f(double dprime) const;
    Eigen::RowVector2cd g(double dprime) const;
};

AsymptoticKernels asymptotic_kernels(double delta);

// The large-m test norm as a function of the offset d':
//     ||[(g - f F^-1 G) D_a - f F^-1] Xi^(1/2)||.
class AsymptoticTestFunction {
public:
    AsymptoticTestFunction(double delta, const Eigen::Matrix2cd& Xi);
    bool singular() const { return singular_; }
    double operator()(double dprime) const;

private:
    AsymptoticKernels k_;
    Eigen::Matrix<cplx, 4, 2> K_;
    bool singular_ = false;
};

struct AsymptoticTestResult {
    bool passed = false;
    double worst_value = 0.0;
    double worst_dprime = 0.0;
    bool singular = false;
};

struct DprimeScan {
    double half_range = 8.0 * kPi;
    int points = 4097;
};

// Large-m two-source consistency test at scaled separation delta for a 2x2
// unit-diagonal Xi.
AsymptoticTestResult asymptotic_consistency_test(double delta, const Eigen::Matrix2cd& Xi,
                                                 const DprimeScan& scan = {}, double tol = 1e-6);

using XiSampler = std::function<Eigen::Matrix2cd(std::mt19937_64&)>;

// Xi = U U^H from two random unit rows of length T.
XiSampler random_xi_sampler(int T = 1);

struct ThresholdOptions {
    int draws = 200;
    double lo = 0.5 * kPi;
    double hi = 4.0 * kPi;
    double tol = 1e-3 * kPi;
    std::uint64_t seed = 1;
    DprimeScan scan{};
};

struct ThresholdResult {
    double delta = 0.0;
    bool monotone = true;  // every draw passing at delta also passes at 2 delta
    int bisection_steps = 0;
};

// Smallest delta at which all sampled Xi pass, by bisection.
ThresholdResult resolution_threshold_search(const XiSampler& sampler, const ThresholdOptions& opts = {});

}  // namespace classdoa
