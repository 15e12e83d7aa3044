#pragma once

// Data-parallel scan kernels. Every kernel has a serial reference and an
// OpenMP version; the two compute each element with identical arithmetic, so
// their outputs are bit-identical and the serial one is what the tests pin.

#include "classdoa/array_model.hpp"

#include <functional>
#include <span>
#include <vector>

namespace classdoa {

enum class Exec { serial, parallel };

// f(theta_k) = ||a^H(theta_k) Z||_2 for each scan point.
RVec dual_norms_serial(const SteeringManifold& manifold, const CMat& Z, std::span<const double> thetas);
RVec dual_norms_parallel(const SteeringManifold& manifold, const CMat& Z, std::span<const double> thetas);
RVec dual_norms(const SteeringManifold& manifold, const CMat& Z, std::span<const double> thetas,
                Exec exec = Exec::parallel);

// Pointwise evaluation of an arbitrary scalar function. f must be safe to call
// concurrently.
RVec evaluate_scan(const std::function<double(double)>& f, std::span<const double> thetas,
                   Exec exec = Exec::parallel);

// Uniform scan of the domain whose fineness (worst distance to the nearest
// point) is at most `fineness`. Periodic domains get cell-centred points,
// closed ones include both endpoints.
std::vector<double> scan_points(const Interval& domain, double fineness);
double scan_step(const std::vector<double>& points, const Interval& domain);

struct Peak {
    double theta = 0.0;
    double value = 0.0;
};

// Indices of discrete local maxima (>= both neighbours; wraps when periodic).
std::vector<std::size_t> local_maxima(const RVec& values, bool periodic);

// Newton ascent on ||a^H(theta) Z||^2 inside [theta0 - halfwidth, theta0 + halfwidth].
Peak polish_dual_peak(const SteeringManifold& manifold, const CMat& Z, double theta0, double halfwidth);

// Golden-section maximization of f on [lo, hi].
Peak polish_golden(const std::function<double(double)>& f, double lo, double hi, double xtol = 1e-11);

// Global maximum of ||a^H(theta) Z||_2 over the domain: dense scan at
// `fineness`, then Newton polish of every local maximum within 5% of the top.
Peak dual_peak(const SteeringManifold& manifold, const CMat& Z, double fineness, Exec exec = Exec::parallel);

// All polished local maxima of the dual function whose value is at least
// `threshold`, sorted by decreasing value.
std::vector<Peak> dual_peaks_above(const SteeringManifold& manifold, const CMat& Z, double fineness,
                                   double threshold, Exec exec = Exec::parallel);

// Global maximum of an arbitrary function: scan plus golden-section polish of
// the top local maxima.
Peak scan_maximize(const std::function<double(double)>& f, const Interval& domain, double fineness,
                   Exec exec = Exec::parallel, int polish_top = 8);

}  // namespace classdoa
