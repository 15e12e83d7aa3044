#include "classdoa/performance.hpp"

#include <omp.h>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <exception>
#include <limits>

namespace classdoa {

const char* to_string(MomentSource s) {
    switch (s) {
        case MomentSource::gumbel_theory: return "gumbel_theory";
        case MomentSource::empirical_fit: return "empirical_fit";
        case MomentSource::user: return "user";
        case MomentSource::montecarlo: return "montecarlo";
    }
    return "?";
}

LambdaProfile::LambdaProfile(const SteeringManifold& manifold, const PerturbationExpansion& e, const CMat& N)
    : manifold_(&manifold), exp_(&e) {
    if (N.rows() != e.A.rows() || N.cols() != e.S.cols()) throw std::invalid_argument("noise matrix has the wrong shape");
    const RVec dq = e.gammas.cwiseProduct(delta_from_noise(e, N));
    Cm_ = e.P_perp * (N - e.D * dq.asDiagonal() * e.U);
    const RVec d0 = e.gammas.cwiseProduct(e.beta);
    Dm_ = (e.A * e.gram_inv - e.P_perp * e.D * d0.asDiagonal()) * e.U;
}

void LambdaProfile::terms(double theta, CRowVec& c, CRowVec& d) const {
    CVec a(manifold_->size());
    manifold_->steering_into(manifold_->normalize(theta), a);
    c = a.adjoint() * Cm_;
    d = a.adjoint() * Dm_;
}

double LambdaProfile::operator()(double theta) const {
    for (Eigen::Index i = 0; i < exp_->thetas.size(); ++i)
        if (std::abs(manifold_->difference(theta, exp_->thetas[i])) < kSupportExclusion) return 0.0;
    CRowVec c, d;
    terms(theta, c, d);
    const double cc = c.squaredNorm();
    if (cc == 0.0) return 0.0;
    const double dd = d.squaredNorm();
    if (dd >= 1.0) return std::numeric_limits<double>::infinity();
    const double cd = (c * d.adjoint())(0, 0).real();
    // Positive root of (1 - |d|^2) x^2 - 2 Re<c,d> x - |c|^2 = 0.
    return (cd + std::sqrt(cd * cd + (1.0 - dd) * cc)) / (1.0 - dd);
}

double optimal_lambda_exact(const PerturbationExpansion& exp, const SteeringManifold& manifold, const CMat& N,
                            double scan_fineness) {
    const double zeta = scan_fineness > 0.0 ? scan_fineness : kPi / (64.0 * manifold.size());
    const LambdaProfile prof(manifold, exp, N);
    const Peak p = scan_maximize([&](double t) { return prof(t); }, manifold.domain(), zeta, Exec::parallel, 8);
    if (!std::isfinite(p.value))
        throw std::runtime_error("no finite regularization keeps the linearized estimate optimal (theta = " +
                                 std::to_string(p.theta) + ")");
    return p.value;
}

double lambda_approx(const SteeringManifold& manifold, const CMat& N, double scan_fineness) {
    const double zeta = scan_fineness > 0.0 ? scan_fineness : kPi / (64.0 * manifold.size());
    return dual_peak(manifold, N, zeta).value;
}

namespace {

// Column-wise DFT of N zero-padded to L, summed power per bin.
RVec dft_power(const CMat& N, int L) {
    Eigen::FFT<double> fft;
    RVec power = RVec::Zero(L);
    std::vector<cplx> in(static_cast<std::size_t>(L)), out;
    for (Eigen::Index t = 0; t < N.cols(); ++t) {
        std::fill(in.begin(), in.end(), cplx(0.0));
        for (Eigen::Index k = 0; k < N.rows(); ++k) in[static_cast<std::size_t>(k)] = N(k, t);
        fft.fwd(out, in);
        for (int l = 0; l < L; ++l) power[l] += std::norm(out[static_cast<std::size_t>(l)]);
    }
    return power;
}

}  // namespace

double lambda_approx_ula_fft(const SteeringManifold& ula, const CMat& N, int oversample) {
    if (!ula.is_ula()) throw std::invalid_argument("FFT shortcut needs a ULA in electrical angle");
    const int m = ula.size();
    const int L = oversample * m;
    const RVec p = dft_power(N, L);
    const double top = p.maxCoeff();
    const double h = 2.0 * kPi / L;
    double best = std::sqrt(top);
    for (auto i : local_maxima(p, true)) {
        // Off-bin loss is below 1% at 8x oversampling.
        if (p[static_cast<Eigen::Index>(i)] < 0.95 * top) continue;
        const Peak q = polish_dual_peak(ula, N, ula.normalize(h * static_cast<double>(i)), h);
        best = std::max(best, q.value);
    }
    return best;
}

double ula_grid_max_sq(const CMat& N) { return dft_power(N, static_cast<int>(N.rows())).maxCoeff(); }

LambdaMoments extreme_value_moments(int m, int T, double sigma, double gamma_expectation) {
    if (m < 3) throw std::invalid_argument("extreme value moments need m >= 3");
    if (T < 1) throw std::invalid_argument("extreme value moments need T >= 1");
    const double lm = std::log(static_cast<double>(m));
    const double llm = std::log(lm);
    const double s2m = sigma * sigma * m;
    const double level = lm + (T - 1) * llm + gamma_expectation - std::lgamma(static_cast<double>(T));
    LambdaMoments out;
    out.gamma_expectation = gamma_expectation;
    out.source = gamma_expectation == kEulerGamma ? MomentSource::gumbel_theory
                 : gamma_expectation == kFittedGamma ? MomentSource::empirical_fit
                                                     : MomentSource::user;
    out.regime_warning = T >= lm / llm;
    out.mean_square = s2m * level;
    // lambda^2 / (sigma^2 m) - level is asymptotically Gumbel with variance
    // pi^2/6; the delta method gives Var(lambda).
    const double var = level > 0 ? s2m * (kPi * kPi / 6.0) / (4.0 * level) : 0.0;
    out.mean = std::sqrt(std::max(0.0, out.mean_square - var));
    return out;
}

LambdaMoments montecarlo_lambda_moments(const PerturbationExpansion& exp, const SteeringManifold& manifold,
                                        const NoiseModel& noise, int trials, double scan_fineness) {
    if (trials < 2) throw std::invalid_argument("Monte Carlo moments need at least two trials");
    const int m = manifold.size();
    const int T = static_cast<int>(exp.S.cols());
    std::vector<double> lam(static_cast<std::size_t>(trials));
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < trials; ++k) {
        try {
            const CMat N = draw_noise(m, T, noise, static_cast<std::uint64_t>(k));
            lam[static_cast<std::size_t>(k)] = optimal_lambda_exact(exp, manifold, N, scan_fineness);
        } catch (...) {
#pragma omp critical(classdoa_mc_error)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    LambdaMoments out;
    out.source = MomentSource::montecarlo;
    for (double l : lam) {
        out.mean += l;
        out.mean_square += l * l;
    }
    out.mean /= trials;
    out.mean_square /= trials;
    return out;
}

LambdaMoments default_lambda_moments(const PerturbationExpansion& exp, const SteeringManifold& manifold,
                                     const NoiseModel& noise, int mc_trials) {
    const int m = manifold.size();
    if (m < 64) return montecarlo_lambda_moments(exp, manifold, noise, mc_trials);
    return extreme_value_moments(m, static_cast<int>(exp.S.cols()), noise.sigma);
}

PerformancePrediction predict_performance(const PerturbationExpansion& exp, const SteeringManifold& manifold,
                                          const NoiseModel& noise, const LambdaMoments& moments) {
    const int m = manifold.size();
    const CMat C = noise.covariance_matrix(m);
    const CMat Bp = exp.P_perp * exp.D;
    const RMat inner = (Bp.adjoint() * C * Bp).cwiseProduct(exp.Xi.transpose()).real();
    const RMat W = exp.gammas.cwiseInverse().asDiagonal() * exp.R.inverse();
    PerformancePrediction p;
    p.sigma = noise.sigma;
    p.lambda_moments = moments;
    p.bias = moments.mean * exp.beta;
    p.covariance = 0.5 * W * inner * W.transpose() + moments.variance() * exp.beta * exp.beta.transpose();
    p.covariance = (0.5 * (p.covariance + p.covariance.transpose())).eval();
    return p;
}

}  // namespace classdoa
