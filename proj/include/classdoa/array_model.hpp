#pragma once

#include "classdoa/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace classdoa {

// Which coordinate a position parameter is expressed in. ULA manifolds work in
// the electrical angle phi = pi*cos(theta); general planar arrays use the
// physical bearing theta.
enum class AngleUnit { electrical, physical };

const char* to_string(AngleUnit unit);

// Polar coordinates of one sensor: radius in wavelengths, angle in radians.
struct Sensor {
    double r = 0.0;
    double rho = 0.0;
};

// Closed interval of admissible parameters. Periodic intervals identify the
// two endpoints (the ULA electrical angle lives on the circle).
struct Interval {
    double lo = 0.0;
    double hi = kPi;
    bool periodic = false;

    double length() const { return hi - lo; }
    bool contains(double x, double slack = 1e-12) const {
        return x >= lo - slack && x <= hi + slack;
    }
    // Wraps into [lo, hi) when periodic, clamps otherwise.
    double wrap(double x) const;
};

// theta -> a(theta) in C^m, with unit-modulus entries
//   a_i(theta) = exp(j * psi_i(theta)).
// For a ULA in electrical angle psi_k = (k-1)*phi; for a planar array
// psi_i = 2*pi*r_i*cos(theta - rho_i).
class SteeringManifold {
public:
    // Half-wavelength ULA parameterized by electrical angle phi in [-pi, pi].
    static SteeringManifold ula(int m);
    // The same half-wavelength ULA as a planar array in physical bearing
    // theta in [0, pi].
    static SteeringManifold ula_physical(int m);
    static SteeringManifold planar(std::vector<Sensor> sensors,
                                   Interval domain = {0.0, kPi, false});

    int size() const { return static_cast<int>(sensors_.size()); }
    const Interval& domain() const { return domain_; }
    AngleUnit unit() const { return unit_; }
    bool is_ula() const { return unit_ == AngleUnit::electrical; }
    const std::vector<Sensor>& sensors() const { return sensors_; }

    // Throws DomainError when theta is outside the domain.
    void check_domain(double theta) const;
    // Maps theta back into the domain: wraps periodic domains, clamps others.
    double normalize(double theta) const;
    // Signed parameter difference a - b, wrapped for periodic domains.
    double difference(double a, double b) const;

    CVec steering(double theta) const;
    CVec derivative(double theta) const;
    CVec second_derivative(double theta) const;

    // Unchecked evaluation into preallocated storage; used by the scan kernels.
    void steering_into(double theta, Eigen::Ref<CVec> out) const;
    void derivative_into(double theta, Eigen::Ref<CVec> out) const;

private:
    SteeringManifold(std::vector<Sensor> sensors, Interval domain, AngleUnit unit);

    double phase(int i, double theta) const;
    double phase_d1(int i, double theta) const;
    double phase_d2(int i, double theta) const;

    std::vector<Sensor> sensors_;
    Interval domain_;
    AngleUnit unit_;
};

double electrical_angle(double theta);

struct ManifoldMatrices {
    CMat A;
    CMat D;
    bool has_duplicates = false;
};

// Columns are a(theta_j) and d(theta_j).
ManifoldMatrices build_matrices(const SteeringManifold& manifold, std::span<const double> thetas);
CMat steering_matrix(const SteeringManifold& manifold, std::span<const double> thetas);

// Position parameters with their amplitude rows (n x T).
struct SparseRepresentation {
    RVec thetas;
    CMat amplitudes;
    AngleUnit unit = AngleUnit::electrical;

    int order() const { return static_cast<int>(thetas.size()); }
    int snapshots() const { return static_cast<int>(amplitudes.cols()); }
    RVec gammas() const { return row_norms(amplitudes); }
    bool irreducible(double drop_tol = 0.0) const;
    std::vector<double> theta_list() const { return {thetas.data(), thetas.data() + thetas.size()}; }

    static SparseRepresentation empty(int T, AngleUnit unit = AngleUnit::electrical);
};

// Circularly-symmetric complex Gaussian noise, columns i.i.d. N(0, C). The
// default covariance is sigma^2 * I.
struct NoiseModel {
    double sigma = 0.0;
    std::optional<CMat> covariance;
    std::uint64_t seed = 0;

    static NoiseModel white(double sigma, std::uint64_t seed) { return {sigma, std::nullopt, seed}; }
    CMat covariance_matrix(int m) const;
};

struct Observation {
    CMat X;
    std::optional<SparseRepresentation> truth;
    double noise_sigma = 0.0;
};

// Independent, reproducible random stream for (seed, stream index). Streams
// do not depend on evaluation order, so trial i draws the same numbers no
// matter which thread runs it.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream);

CMat draw_noise(int m, int T, const NoiseModel& noise, std::uint64_t stream);

Observation generate_observation(const SteeringManifold& manifold, const SparseRepresentation& truth,
                                 const NoiseModel& noise, int T, std::uint64_t stream = 0);

// R_x = X X^H / T.
CMat sample_correlation(const CMat& X);

// Geometry text config. Either the shorthand
//     ula <m>
// or a sensor list with an optional domain line:
//     sensor <r_wavelengths> <rho_radians>
//     domain <lo> <hi> [periodic]
// '#' starts a comment.
SteeringManifold load_geometry(std::istream& in);

}  // namespace classdoa
