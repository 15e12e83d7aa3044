#include "classdoa/class_estimator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace classdoa {

PropernessResult count_maxima_by_scan(const CMat& Z, const SteeringManifold& manifold, std::size_t points,
                                      double rel_tol) {
    const Interval& dom = manifold.domain();
    const double fineness = dom.length() / (2.0 * static_cast<double>(points));
    const auto pts = scan_points(dom, fineness);
    const RVec vals = dual_norms(manifold, Z, pts);
    const double h = scan_step(pts, dom);
    std::vector<Peak> peaks;
    for (auto i : local_maxima(vals, dom.periodic)) peaks.push_back(polish_dual_peak(manifold, Z, pts[i], h));
    PropernessResult res;
    if (peaks.empty()) return res;
    for (const auto& p : peaks) res.peak = std::max(res.peak, p.value);
    std::vector<double> locs;
    for (const auto& p : peaks) {
        if (p.value < res.peak * (1.0 - rel_tol)) continue;
        bool dup = false;
        for (double l : locs) dup = dup || std::abs(manifold.difference(l, p.theta)) < 1e-6;
        if (!dup) locs.push_back(p.theta);
    }
    std::sort(locs.begin(), locs.end());
    res.count = static_cast<int>(locs.size());
    res.locations = Eigen::Map<RVec>(locs.data(), static_cast<Eigen::Index>(locs.size()));
    return res;
}

PropernessResult properness_max_count(const CMat& Z, const SteeringManifold& ula) {
    if (!ula.is_ula()) throw std::invalid_argument("properness_max_count needs a ULA in electrical angle");
    if (Z.rows() != ula.size()) throw std::invalid_argument("Z rows differ from the array size");
    if (Z.norm() == 0.0) throw std::invalid_argument("properness_max_count needs a nonzero Z");
    const int m = ula.size();
    const CMat M = Z * Z.adjoint();

    // f^2(phi) = sum_{delta} t_delta e^{j delta phi}, t_delta = sum_k M(k, k + delta).
    const int deg = 2 * m - 2;
    CVec coef = CVec::Zero(deg + 1);  // coefficient of w^alpha, alpha = delta + m - 1
    for (int delta = -(m - 1); delta <= m - 1; ++delta) {
        cplx s = 0.0;
        for (int k = 0; k < m; ++k) {
            const int l = k + delta;
            if (l >= 0 && l < m) s += M(k, l);
        }
        coef[delta + m - 1] = s;
    }

    PropernessResult res;
    const double scale = coef.cwiseAbs().maxCoeff();
    bool flat = true;
    for (int a = 0; a <= deg; ++a)
        if (a != m - 1 && std::abs(coef[a]) > 1e-13 * scale) flat = false;
    if (flat) {
        res.constant_function = true;
        res.peak = std::sqrt(std::max(coef[m - 1].real(), 0.0));
        return res;
    }

    // The peak value is found by a scan; the polynomial then locates every
    // point where it is attained.
    const Peak top = dual_peak(ula, Z, kPi / (64.0 * m));
    res.peak = top.value;
    coef[m - 1] -= top.value * top.value;

    int lo = 0, hi = deg;
    while (lo <= hi && std::abs(coef[lo]) <= 1e-14 * scale) ++lo;
    while (hi >= lo && std::abs(coef[hi]) <= 1e-14 * scale) --hi;
    const int d = hi - lo;
    std::vector<cplx> roots;
    if (d >= 1) {
        CMat C = CMat::Zero(d, d);
        for (int i = 1; i < d; ++i) C(i, i - 1) = 1.0;
        for (int i = 0; i < d; ++i) C(i, d - 1) = -coef[lo + i] / coef[hi];
        Eigen::ComplexEigenSolver<CMat> es(C, false);
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) roots.push_back(es.eigenvalues()[i]);
    }

    // Double roots on the unit circle split into pairs at distance
    // ~sqrt(rounding); anything between "on" and "clearly off" is ambiguous.
    bool ambiguous = false;
    std::vector<double> angles;
    for (const cplx& r : roots) {
        const double off = std::abs(std::abs(r) - 1.0);
        if (off <= 1e-5)
            angles.push_back(std::arg(r));
        else if (off <= 1e-3)
            ambiguous = true;
    }
    std::sort(angles.begin(), angles.end());
    std::vector<std::vector<double>> clusters;
    for (double a : angles) {
        if (!clusters.empty() && std::abs(ula.difference(a, clusters.back().back())) < 1e-4)
            clusters.back().push_back(a);
        else
            clusters.push_back({a});
    }
    if (clusters.size() > 1 && std::abs(ula.difference(clusters.front().front(), clusters.back().back())) < 1e-4) {
        clusters.front().insert(clusters.front().end(), clusters.back().begin(), clusters.back().end());
        clusters.pop_back();
    }
    std::vector<double> locs;
    for (const auto& c : clusters) {
        if (c.size() % 2 != 0) ambiguous = true;
        cplx s = 0.0;
        for (double a : c) s += std::polar(1.0, a);
        locs.push_back(std::arg(s));
    }
    if (ambiguous || locs.empty()) {
        PropernessResult fb = count_maxima_by_scan(Z, ula, 1u << 16, 1e-9);
        fb.fallback_used = true;
        return fb;
    }
    std::sort(locs.begin(), locs.end());
    res.count = static_cast<int>(locs.size());
    res.locations = Eigen::Map<RVec>(locs.data(), static_cast<Eigen::Index>(locs.size()));
    if (res.count > m - 1)
        throw std::logic_error("properness check found more than m - 1 global maxima");
    return res;
}

}  // namespace classdoa
