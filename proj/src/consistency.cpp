#include "classdoa/consistency.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>

namespace classdoa {

ConsistencyFunction::ConsistencyFunction(const SteeringManifold& manifold, const PerturbationExpansion& e)
    : manifold_(&manifold) {
    const RVec d0 = e.gammas.cwiseProduct(e.beta);
    M_ = (e.P_perp * e.D * d0.asDiagonal() - e.A * e.gram_inv) * xi_sqrt(e.Xi);
}

double ConsistencyFunction::operator()(double theta) const {
    CVec a(manifold_->size());
    manifold_->steering_into(manifold_->normalize(theta), a);
    return (a.adjoint() * M_).norm();
}

ConsistencyVerdict check_consistency(const SteeringManifold& manifold, const SparseRepresentation& truth,
                                     double scan_fineness, double tol) {
    const auto e = build_expansion(manifold, truth);
    const ConsistencyFunction lhs(manifold, e);
    const double zeta = scan_fineness > 0.0 ? scan_fineness : kPi / (64.0 * manifold.size());
    const Peak p = scan_maximize([&](double t) { return lhs(t); }, manifold.domain(), zeta, Exec::parallel, 16);
    ConsistencyVerdict v;
    v.worst_theta = p.theta;
    v.worst_value = p.value;
    v.margin = 1.0 - p.value;
    v.consistent = p.value <= 1.0 + tol;
    return v;
}

namespace {

// Power series of int_0^1 t^p e^{jxt} dt = sum_k (jx)^k / (k! (k + p + 1)).
cplx moment_series(double x, int p) {
    cplx term = 1.0, sum = 0.0;
    for (int k = 0; k < 30; ++k) {
        sum += term / static_cast<double>(k + p + 1);
        term *= kJ * x / static_cast<double>(k + 1);
    }
    return sum;
}

constexpr double kSeriesCut = 0.5;

}  // namespace

cplx kernel_F(double x) {
    if (std::abs(x) < kSeriesCut) return moment_series(x, 0);
    return (std::exp(kJ * x) - 1.0) / (kJ * x);
}

cplx kernel_G(double x) {
    if (std::abs(x) < kSeriesCut) return kJ * moment_series(x, 1);
    const cplx e = std::exp(kJ * x);
    return e / x + kJ * (e - 1.0) / (x * x);
}

cplx kernel_H(double x) {
    if (std::abs(x) < kSeriesCut) return moment_series(x, 2);
    const cplx e = std::exp(kJ * x);
    return -(kJ * e / x - 2.0 * e / (x * x) - 2.0 * kJ * (e - 1.0) / (x * x * x));
}

Eigen::RowVector2cd AsymptoticKernels::f(double dprime) const {
    return {kernel_F(dprime), kernel_F(dprime + delta)};
}

Eigen::RowVector2cd AsymptoticKernels::g(double dprime) const {
    return {kernel_G(dprime), kernel_G(dprime + delta)};
}

AsymptoticKernels asymptotic_kernels(double delta) {
    AsymptoticKernels k;
    k.delta = delta;
    k.F << kernel_F(0.0), kernel_F(delta), kernel_F(-delta), kernel_F(0.0);
    k.G << kernel_G(0.0), kernel_G(delta), kernel_G(-delta), kernel_G(0.0);
    k.H << kernel_H(0.0), kernel_H(delta), kernel_H(-delta), kernel_H(0.0);
    return k;
}

AsymptoticTestFunction::AsymptoticTestFunction(double delta, const Eigen::Matrix2cd& Xi)
    : k_(asymptotic_kernels(delta)) {
    // [g, f] K reproduces the tested row vector.
    const Eigen::Matrix2cd Finv = k_.F.inverse();
    const Eigen::Matrix2d Ra = (k_.H - k_.G.adjoint() * Finv * k_.G).cwiseProduct(Xi.transpose()).real();
    const double scale = Ra.cwiseAbs().maxCoeff();
    if (!(std::abs(Ra.determinant()) > 1e-14 * scale * scale)) {
        singular_ = true;
        return;
    }
    Eigen::Vector2d r;
    for (int i = 0; i < 2; ++i) r[i] = (k_.G.col(i).adjoint() * Finv * Xi.col(i))(0, 0).real();
    const Eigen::Vector2d beta = Ra.inverse() * r;
    const Eigen::Matrix2cd Da = beta.cast<cplx>().asDiagonal();
    const CMat root = xi_sqrt(Xi);
    K_.topRows<2>() = Da * root;
    K_.bottomRows<2>() = -Finv * (k_.G * Da + Eigen::Matrix2cd::Identity()) * root;
}

double AsymptoticTestFunction::operator()(double dprime) const {
    if (singular_) return INFINITY;
    Eigen::Matrix<cplx, 1, 4> row;
    row << k_.g(dprime), k_.f(dprime);
    return (row * K_).norm();
}

AsymptoticTestResult asymptotic_consistency_test(double delta, const Eigen::Matrix2cd& Xi, const DprimeScan& scan,
                                                 double tol) {
    AsymptoticTestResult res;
    const AsymptoticTestFunction value(delta, Xi);
    if (value.singular()) {
        res.singular = true;
        res.worst_value = INFINITY;
        return res;
    }
    const Interval range{-scan.half_range, scan.half_range, false};
    const double fineness = scan.half_range / (scan.points - 1);
    const Peak p = scan_maximize([&](double dp) { return value(dp); }, range, fineness, Exec::serial, 16);
    res.worst_value = p.value;
    res.worst_dprime = p.theta;
    res.passed = p.value <= 1.0 + tol;
    return res;
}

XiSampler random_xi_sampler(int T) {
    if (T < 1) throw std::invalid_argument("Xi sampler needs T >= 1");
    return [T](std::mt19937_64& rng) {
        std::normal_distribution<double> g(0.0, 1.0);
        Eigen::Matrix<cplx, 2, Eigen::Dynamic> U(2, T);
        for (int i = 0; i < 2; ++i) {
            for (int t = 0; t < T; ++t) U(i, t) = cplx(g(rng), g(rng));
            U.row(i) /= U.row(i).norm();
        }
        Eigen::Matrix2cd Xi = U * U.adjoint();
        Xi(0, 0) = Xi(1, 1) = 1.0;
        return Xi;
    };
}

namespace {

bool all_pass(double delta, const std::vector<Eigen::Matrix2cd>& xis, const DprimeScan& scan) {
    const int K = static_cast<int>(xis.size());
    int failed = 0;
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic) reduction(+ : failed)
    for (int i = 0; i < K; ++i) {
        // Other threads may already have found a failure; the count only needs
        // to be nonzero.
        if (failed) continue;
        try {
            if (!asymptotic_consistency_test(delta, xis[static_cast<std::size_t>(i)], scan).passed) ++failed;
        } catch (...) {
#pragma omp critical(classdoa_threshold_error)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    return failed == 0;
}

}  // namespace

ThresholdResult resolution_threshold_search(const XiSampler& sampler, const ThresholdOptions& opts) {
    if (opts.draws < 1) throw std::invalid_argument("threshold search needs at least one draw");
    std::mt19937_64 rng(opts.seed);
    std::vector<Eigen::Matrix2cd> xis;
    for (int i = 0; i < opts.draws; ++i) xis.push_back(sampler(rng));

    double lo = opts.lo, hi = opts.hi;
    ThresholdResult res;
    if (all_pass(lo, xis, opts.scan)) {
        res.delta = lo;
    } else {
        while (!all_pass(hi, xis, opts.scan)) {
            lo = hi;
            hi *= 2.0;
            if (hi > 64.0 * kPi) throw std::runtime_error("threshold search: no passing separation found");
        }
        while (hi - lo > opts.tol) {
            const double mid = 0.5 * (lo + hi);
            (all_pass(mid, xis, opts.scan) ? hi : lo) = mid;
            ++res.bisection_steps;
        }
        res.delta = hi;
    }
    res.monotone = all_pass(2.0 * res.delta, xis, opts.scan);
    return res;
}

}  // namespace classdoa
