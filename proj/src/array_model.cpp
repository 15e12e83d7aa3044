#include "classdoa/array_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

namespace classdoa {

const char* to_string(AngleUnit unit) {
    return unit == AngleUnit::electrical ? "electrical" : "physical";
}

SteeringManifold::SteeringManifold(std::vector<Sensor> sensors, Interval domain, AngleUnit unit)
    : sensors_(std::move(sensors)), domain_(domain), unit_(unit) {
    if (sensors_.empty()) throw std::invalid_argument("manifold needs at least one sensor");
    if (!(domain_.hi > domain_.lo)) throw std::invalid_argument("empty parameter domain");
}

SteeringManifold SteeringManifold::ula(int m) {
    if (m < 1) throw std::invalid_argument("ULA needs m >= 1");
    std::vector<Sensor> s(m);
    for (int i = 0; i < m; ++i) s[i] = {0.5 * i, 0.0};
    return SteeringManifold(std::move(s), {-kPi, kPi, true}, AngleUnit::electrical);
}

SteeringManifold SteeringManifold::ula_physical(int m) {
    if (m < 1) throw std::invalid_argument("ULA needs m >= 1");
    std::vector<Sensor> s(m);
    for (int i = 0; i < m; ++i) s[i] = {0.5 * i, 0.0};
    return SteeringManifold(std::move(s), {0.0, kPi, false}, AngleUnit::physical);
}

SteeringManifold SteeringManifold::planar(std::vector<Sensor> sensors, Interval domain) {
    return SteeringManifold(std::move(sensors), domain, AngleUnit::physical);
}

void SteeringManifold::check_domain(double theta) const {
    if (!std::isfinite(theta) || !domain_.contains(theta)) {
        std::ostringstream os;
        os << "parameter " << theta << " outside [" << domain_.lo << ", " << domain_.hi << "]";
        throw DomainError(os.str());
    }
}

double Interval::wrap(double x) const {
    if (!periodic) return std::clamp(x, lo, hi);
    const double L = length();
    double t = std::fmod(x - lo, L);
    if (t < 0) t += L;
    return lo + t;
}

double SteeringManifold::normalize(double theta) const { return domain_.wrap(theta); }

double SteeringManifold::difference(double a, double b) const {
    double d = a - b;
    if (domain_.periodic) {
        const double L = domain_.length();
        d = std::remainder(d, L);
    }
    return d;
}

// ULA: psi_k = k * phi with k = 0..m-1 (sensor radius 0.5*k wavelengths).
double SteeringManifold::phase(int i, double theta) const {
    if (unit_ == AngleUnit::electrical) return 2.0 * sensors_[i].r * theta;
    return 2.0 * kPi * sensors_[i].r * std::cos(theta - sensors_[i].rho);
}

double SteeringManifold::phase_d1(int i, double theta) const {
    if (unit_ == AngleUnit::electrical) return 2.0 * sensors_[i].r;
    return -2.0 * kPi * sensors_[i].r * std::sin(theta - sensors_[i].rho);
}

double SteeringManifold::phase_d2(int i, double theta) const {
    if (unit_ == AngleUnit::electrical) return 0.0;
    return -2.0 * kPi * sensors_[i].r * std::cos(theta - sensors_[i].rho);
}

void SteeringManifold::steering_into(double theta, Eigen::Ref<CVec> out) const {
    const int m = size();
    if (unit_ == AngleUnit::electrical) {
        // Phasor recursion is cheaper than m calls to polar() but drifts; the
        // drift stays below 1e-13 for m <= 4096 and is reset every 64 steps.
        const cplx step = std::polar(1.0, theta);
        cplx z{1.0, 0.0};
        for (int k = 0; k < m; ++k) {
            if ((k & 63) == 0) z = std::polar(1.0, theta * k);
            out[k] = z;
            z *= step;
        }
        return;
    }
    for (int i = 0; i < m; ++i) out[i] = std::polar(1.0, phase(i, theta));
}

void SteeringManifold::derivative_into(double theta, Eigen::Ref<CVec> out) const {
    steering_into(theta, out);
    for (int i = 0; i < size(); ++i) out[i] *= kJ * phase_d1(i, theta);
}

CVec SteeringManifold::steering(double theta) const {
    check_domain(theta);
    CVec a(size());
    steering_into(theta, a);
    return a;
}

CVec SteeringManifold::derivative(double theta) const {
    check_domain(theta);
    CVec d(size());
    derivative_into(theta, d);
    return d;
}

CVec SteeringManifold::second_derivative(double theta) const {
    check_domain(theta);
    CVec a(size());
    steering_into(theta, a);
    for (int i = 0; i < size(); ++i) {
        const double p1 = phase_d1(i, theta);
        a[i] *= cplx(-p1 * p1, phase_d2(i, theta));
    }
    return a;
}

double electrical_angle(double theta) { return kPi * std::cos(theta); }

ManifoldMatrices build_matrices(const SteeringManifold& manifold, std::span<const double> thetas) {
    if (thetas.empty()) throw std::invalid_argument("build_matrices needs at least one parameter");
    const int m = manifold.size();
    const auto n = static_cast<Eigen::Index>(thetas.size());
    ManifoldMatrices out{CMat(m, n), CMat(m, n), false};
    for (Eigen::Index j = 0; j < n; ++j) {
        manifold.check_domain(thetas[j]);
        manifold.steering_into(thetas[j], out.A.col(j));
        manifold.derivative_into(thetas[j], out.D.col(j));
    }
    std::vector<double> sorted(thetas.begin(), thetas.end());
    std::sort(sorted.begin(), sorted.end());
    out.has_duplicates = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    return out;
}

CMat steering_matrix(const SteeringManifold& manifold, std::span<const double> thetas) {
    CMat A(manifold.size(), static_cast<Eigen::Index>(thetas.size()));
    for (std::size_t j = 0; j < thetas.size(); ++j) {
        manifold.check_domain(thetas[j]);
        manifold.steering_into(thetas[j], A.col(static_cast<Eigen::Index>(j)));
    }
    return A;
}

bool SparseRepresentation::irreducible(double drop_tol) const {
    if (thetas.size() != amplitudes.rows()) return false;
    return order() == 0 || gammas().minCoeff() > drop_tol;
}

SparseRepresentation SparseRepresentation::empty(int T, AngleUnit unit) {
    return {RVec(0), CMat(0, T), unit};
}

CMat NoiseModel::covariance_matrix(int m) const {
    if (covariance) return *covariance;
    return CMat::Identity(m, m) * (sigma * sigma);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    const std::uint64_t key = splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(seed)};
    return std::mt19937_64(seq);
}

CMat draw_noise(int m, int T, const NoiseModel& noise, std::uint64_t stream) {
    CMat W(m, T);
    auto rng = make_stream(noise.seed, stream);
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < m; ++i) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            W(i, t) = cplx(re, im);
        }
    if (!noise.covariance) return W * noise.sigma;

    // C may be singular; LDLT with pivoting gives C = P^T L D L^H P.
    const CMat& C = *noise.covariance;
    if (C.rows() != m || C.cols() != m) throw std::invalid_argument("noise covariance has wrong size");
    Eigen::LDLT<CMat> ldlt(C);
    RVec d = ldlt.vectorD().real().cwiseMax(0.0).cwiseSqrt();
    CMat L = ldlt.matrixL();
    CMat factor = ldlt.transpositionsP().transpose() * (L * d.asDiagonal());
    return factor * W;
}

Observation generate_observation(const SteeringManifold& manifold, const SparseRepresentation& truth,
                                 const NoiseModel& noise, int T, std::uint64_t stream) {
    const int m = manifold.size();
    if (truth.order() > 0 && truth.amplitudes.cols() != T)
        throw std::invalid_argument("truth amplitudes must have T columns");
    CMat X = CMat::Zero(m, T);
    if (truth.order() > 0) {
        const auto thetas = truth.theta_list();
        X = steering_matrix(manifold, thetas) * truth.amplitudes;
    }
    const bool noisy = noise.covariance.has_value() || noise.sigma > 0.0;
    if (noisy) X += draw_noise(m, T, noise, stream);
    return {std::move(X), truth, noise.sigma};
}

CMat sample_correlation(const CMat& X) {
    if (X.cols() < 1) throw std::invalid_argument("sample_correlation needs T >= 1");
    CMat R = X * X.adjoint() / static_cast<double>(X.cols());
    // Hermitian up to round-off; make it exact.
    return (R + R.adjoint()) * 0.5;
}

SteeringManifold load_geometry(std::istream& in) {
    std::vector<Sensor> sensors;
    std::optional<Interval> domain;
    std::optional<int> ula_m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto fail = [&](const std::string& msg) {
            throw std::runtime_error("geometry line " + std::to_string(lineno) + ": " + msg);
        };
        if (key == "ula") {
            int m = 0;
            if (!(ls >> m) || m < 1) fail("expected 'ula <m>'");
            ula_m = m;
        } else if (key == "sensor") {
            Sensor s;
            if (!(ls >> s.r >> s.rho)) fail("expected 'sensor <r> <rho>'");
            sensors.push_back(s);
        } else if (key == "domain") {
            Interval d;
            if (!(ls >> d.lo >> d.hi)) fail("expected 'domain <lo> <hi> [periodic]'");
            std::string flag;
            d.periodic = (ls >> flag) && flag == "periodic";
            domain = d;
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (ula_m) {
        if (!sensors.empty()) throw std::runtime_error("geometry: 'ula' and 'sensor' are exclusive");
        return SteeringManifold::ula(*ula_m);
    }
    if (sensors.empty()) throw std::runtime_error("geometry: no sensors");
    return SteeringManifold::planar(std::move(sensors), domain.value_or(Interval{0.0, kPi, false}));
}

}  // namespace classdoa
