#include "classdoa/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace classdoa {

namespace {

double dual_norm_at(const SteeringManifold& manifold, const CMat& Z, double theta, CVec& scratch) {
    manifold.steering_into(manifold.normalize(theta), scratch);
    return (scratch.adjoint() * Z).norm();
}

}  // namespace

RVec dual_norms_serial(const SteeringManifold& manifold, const CMat& Z, std::span<const double> thetas) {
    const auto L = static_cast<Eigen::Index>(thetas.size());
    RVec out(L);
    CVec a(manifold.size());
    for (Eigen::Index k = 0; k < L; ++k) out[k] = dual_norm_at(manifold, Z, thetas[k], a);
    return out;
}

RVec dual_norms_parallel(const SteeringManifold& manifold, const CMat& Z, std::span<const double> thetas) {
    const auto L = static_cast<Eigen::Index>(thetas.size());
    RVec out(L);
#pragma omp parallel
    {
        CVec a(manifold.size());
#pragma omp for schedule(static)
        for (Eigen::Index k = 0; k < L; ++k) out[k] = dual_norm_at(manifold, Z, thetas[k], a);
    }
    return out;
}

RVec dual_norms(const SteeringManifold& manifold, const CMat& Z, std::span<const double> thetas, Exec exec) {
    // Nested inside an already-parallel Monte Carlo loop the serial path is
    // the right one.
    if (exec == Exec::serial || omp_in_parallel()) return dual_norms_serial(manifold, Z, thetas);
    return dual_norms_parallel(manifold, Z, thetas);
}

RVec evaluate_scan(const std::function<double(double)>& f, std::span<const double> thetas, Exec exec) {
    const auto L = static_cast<Eigen::Index>(thetas.size());
    RVec out(L);
    if (exec == Exec::serial || omp_in_parallel()) {
        for (Eigen::Index k = 0; k < L; ++k) out[k] = f(thetas[k]);
        return out;
    }
#pragma omp parallel for schedule(static)
    for (Eigen::Index k = 0; k < L; ++k) out[k] = f(thetas[k]);
    return out;
}

std::vector<double> scan_points(const Interval& domain, double fineness) {
    if (!(fineness > 0.0)) throw std::invalid_argument("scan fineness must be positive");
    const double L = domain.length();
    std::vector<double> pts;
    if (domain.periodic) {
        const auto n = static_cast<std::size_t>(std::ceil(L / (2.0 * fineness)));
        const double h = L / static_cast<double>(n);
        pts.resize(n);
        for (std::size_t k = 0; k < n; ++k) pts[k] = domain.lo + (static_cast<double>(k) + 0.5) * h;
    } else {
        const auto gaps = static_cast<std::size_t>(std::max(1.0, std::ceil(L / (2.0 * fineness))));
        const double h = L / static_cast<double>(gaps);
        pts.resize(gaps + 1);
        for (std::size_t k = 0; k <= gaps; ++k) pts[k] = domain.lo + static_cast<double>(k) * h;
        pts.back() = domain.hi;
    }
    return pts;
}

double scan_step(const std::vector<double>& points, const Interval& domain) {
    if (points.size() < 2) return domain.length();
    return points[1] - points[0];
}

std::vector<std::size_t> local_maxima(const RVec& values, bool periodic) {
    const auto n = static_cast<std::size_t>(values.size());
    std::vector<std::size_t> idx;
    if (n == 0) return idx;
    if (n == 1) return {0};
    for (std::size_t k = 0; k < n; ++k) {
        const bool has_left = periodic || k > 0;
        const bool has_right = periodic || k + 1 < n;
        const double left = has_left ? values[static_cast<Eigen::Index>((k + n - 1) % n)] : -INFINITY;
        const double right = has_right ? values[static_cast<Eigen::Index>((k + 1) % n)] : -INFINITY;
        const double v = values[static_cast<Eigen::Index>(k)];
        // Plateaus report their first point only.
        if (v > left && v >= right) idx.push_back(k);
    }
    return idx;
}

Peak polish_dual_peak(const SteeringManifold& manifold, const CMat& Z, double theta0, double halfwidth) {
    const int m = manifold.size();
    CVec a(m), d(m), dd(m);
    const double lo = theta0 - halfwidth;
    const double hi = theta0 + halfwidth;
    auto g_and_derivs = [&](double th, double& g, double& g1, double& g2) {
        const double t = manifold.normalize(th);
        manifold.steering_into(t, a);
        manifold.derivative_into(t, d);
        dd = manifold.second_derivative(t);
        const CRowVec u = a.adjoint() * Z;
        const CRowVec v = d.adjoint() * Z;
        const CRowVec w = dd.adjoint() * Z;
        g = u.squaredNorm();
        g1 = 2.0 * (u.conjugate().cwiseProduct(v)).sum().real();
        g2 = 2.0 * (v.squaredNorm() + (u.conjugate().cwiseProduct(w)).sum().real());
    };
    double th = theta0;
    double g = 0, g1 = 0, g2 = 0;
    g_and_derivs(th, g, g1, g2);
    double step_cap = halfwidth;
    for (int it = 0; it < 60; ++it) {
        double step;
        if (g2 < 0.0) {
            step = -g1 / g2;
        } else {
            // Not locally concave: move uphill by a fraction of the bracket.
            step = (g1 > 0 ? 1.0 : -1.0) * 0.25 * step_cap;
        }
        step = std::clamp(step, -step_cap, step_cap);
        double trial = std::clamp(th + step, lo, hi);
        double gt, g1t, g2t;
        g_and_derivs(trial, gt, g1t, g2t);
        int backtracks = 0;
        while (gt < g && backtracks < 40) {
            step *= 0.5;
            trial = std::clamp(th + step, lo, hi);
            g_and_derivs(trial, gt, g1t, g2t);
            ++backtracks;
        }
        if (gt < g) break;
        const double moved = std::abs(trial - th);
        th = trial;
        g = gt;
        g1 = g1t;
        g2 = g2t;
        if (moved < 1e-15 * std::max(1.0, std::abs(th))) break;
        if (g2 < 0.0 && std::abs(g1 / g2) < 1e-14) break;
    }
    return {manifold.normalize(th), std::sqrt(std::max(g, 0.0))};
}

Peak polish_golden(const std::function<double(double)>& f, double lo, double hi, double xtol) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > xtol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    // Endpoints may beat the interior when the maximum sits on the bracket.
    Peak best{c, fc};
    if (fd > best.value) best = {d, fd};
    return best;
}

namespace {

std::vector<std::size_t> top_candidates(const RVec& values, bool periodic, double rel_floor, int limit) {
    auto idx = local_maxima(values, periodic);
    if (idx.empty()) return idx;
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) {
        return values[static_cast<Eigen::Index>(i)] > values[static_cast<Eigen::Index>(j)];
    });
    const double top = values[static_cast<Eigen::Index>(idx.front())];
    std::vector<std::size_t> out;
    for (auto i : idx) {
        if (values[static_cast<Eigen::Index>(i)] < rel_floor * top && !out.empty()) break;
        out.push_back(i);
        if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    }
    return out;
}

}  // namespace

Peak dual_peak(const SteeringManifold& manifold, const CMat& Z, double fineness, Exec exec) {
    const auto pts = scan_points(manifold.domain(), fineness);
    const RVec vals = dual_norms(manifold, Z, pts, exec);
    const double h = scan_step(pts, manifold.domain());
    Peak best{pts.front(), -1.0};
    for (auto i : top_candidates(vals, manifold.domain().periodic, 0.95, 0)) {
        Peak p = polish_dual_peak(manifold, Z, pts[i], h);
        // Polish can only improve; keep the scan value if it somehow did not.
        if (p.value < vals[static_cast<Eigen::Index>(i)]) p = {pts[i], vals[static_cast<Eigen::Index>(i)]};
        if (p.value > best.value) best = p;
    }
    return best;
}

std::vector<Peak> dual_peaks_above(const SteeringManifold& manifold, const CMat& Z, double fineness,
                                   double threshold, Exec exec) {
    const auto pts = scan_points(manifold.domain(), fineness);
    const RVec vals = dual_norms(manifold, Z, pts, exec);
    const double h = scan_step(pts, manifold.domain());
    std::vector<Peak> out;
    // Scan values can sit below the true peak by a small fraction; polish
    // anything within 5% of the threshold.
    for (auto i : local_maxima(vals, manifold.domain().periodic)) {
        if (vals[static_cast<Eigen::Index>(i)] < 0.95 * threshold) continue;
        Peak p = polish_dual_peak(manifold, Z, pts[i], h);
        if (p.value >= threshold) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
    return out;
}

Peak scan_maximize(const std::function<double(double)>& f, const Interval& domain, double fineness, Exec exec,
                   int polish_top) {
    const auto pts = scan_points(domain, fineness);
    const RVec vals = evaluate_scan(f, pts, exec);
    const double h = scan_step(pts, domain);
    auto wrapped = [&](double x) { return f(domain.wrap(x)); };
    Peak best{pts.front(), -INFINITY};
    for (Eigen::Index k = 0; k < vals.size(); ++k)
        if (vals[k] > best.value) best = {pts[static_cast<std::size_t>(k)], vals[k]};
    for (auto i : top_candidates(vals, domain.periodic, -INFINITY, polish_top)) {
        double lo = pts[i] - h, hi = pts[i] + h;
        if (!domain.periodic) {
            lo = std::max(lo, domain.lo);
            hi = std::min(hi, domain.hi);
        }
        Peak p = polish_golden(wrapped, lo, hi);
        p.theta = domain.wrap(p.theta);
        if (p.value > best.value) best = p;
    }
    return best;
}

}  // namespace classdoa
