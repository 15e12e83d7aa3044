#include "classdoa/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace classdoa {

const char* to_string(BaselineMethod m) { return m == BaselineMethod::cbf ? "cbf" : "ml"; }

namespace {

CMat least_squares(const CMat& A, const CMat& X) { return A.colPivHouseholderQr().solve(X); }

}  // namespace

double concentrated_cost(const CMat& X, const SteeringManifold& manifold, std::span<const double> thetas) {
    if (thetas.empty()) return X.squaredNorm();
    const CMat A = steering_matrix(manifold, thetas);
    return (X - A * least_squares(A, X)).squaredNorm();
}

BaselineEstimate nlls_refine(const CMat& X, const SteeringManifold& manifold, std::vector<double> th,
                             const NllsOptions& opts) {
    const int n = static_cast<int>(th.size());
    const int m = static_cast<int>(X.rows());
    const int T = static_cast<int>(X.cols());
    BaselineEstimate est;
    est.method = BaselineMethod::nlls_ml;
    for (auto& t : th) t = manifold.normalize(t);

    struct State {
        CMat A, D, S, Rz;
        double cost;
    };
    auto evaluate = [&](const std::vector<double>& t) {
        State s;
        auto mats = build_matrices(manifold, t);
        s.A = std::move(mats.A);
        s.D = std::move(mats.D);
        s.S = least_squares(s.A, X);
        s.Rz = X - s.A * s.S;
        s.cost = s.Rz.squaredNorm();
        return s;
    };
    State cur = evaluate(th);
    double mu = 1e-3;
    bool converged = false;
    const double scale = std::max(X.squaredNorm(), 1e-300);
    for (int it = 0; it < opts.max_iter; ++it) {
        est.iterations = it + 1;
        // Kaufman's approximation to the variable-projection Jacobian:
        // d r / d theta_i = -P_perp d_i S_i.
        const CMat Q = cur.A.householderQr().householderQ() * CMat::Identity(m, n);
        RMat J(2 * m * T, n);
        for (int i = 0; i < n; ++i) {
            const CVec pd = cur.D.col(i) - Q * (Q.adjoint() * cur.D.col(i));
            const CMat Ji = -pd * cur.S.row(i);
            J.col(i) << Eigen::Map<const RVec>(reinterpret_cast<const double*>(Ji.data()), 2 * m * T);
        }
        const RVec r = Eigen::Map<const RVec>(reinterpret_cast<const double*>(cur.Rz.data()), 2 * m * T);
        const RVec g = J.transpose() * r;
        if (g.norm() < opts.grad_tol * std::sqrt(scale) * std::pow(static_cast<double>(m), 1.5)) {
            converged = true;
            break;
        }
        const RMat JtJ = J.transpose() * J;
        bool improved = false;
        for (int tries = 0; tries < 30; ++tries) {
            RMat Hm = JtJ;
            Hm.diagonal() += mu * JtJ.diagonal().cwiseMax(1e-12 * JtJ.diagonal().maxCoeff());
            const RVec step = Hm.ldlt().solve(-g);
            std::vector<double> trial(th);
            for (int i = 0; i < n; ++i) trial[static_cast<std::size_t>(i)] = manifold.normalize(th[static_cast<std::size_t>(i)] + step[i]);
            State s = evaluate(trial);
            if (s.cost < cur.cost) {
                const double gain = cur.cost - s.cost;
                th = std::move(trial);
                cur = std::move(s);
                mu = std::max(mu / 3.0, 1e-12);
                improved = true;
                if (gain <= 1e-15 * scale || step.lpNorm<Eigen::Infinity>() < 1e-14) converged = true;
                break;
            }
            mu *= 4.0;
        }
        if (!improved) {
            // No descent even for tiny steps: stationary to rounding level.
            converged = true;
            break;
        }
        if (converged) break;
    }
    est.thetas = Eigen::Map<RVec>(th.data(), n);
    est.amplitudes = cur.S;
    est.objective = cur.cost;
    est.flagged = !converged;
    return est;
}

RVec cbf_spectrum(const CMat& X, const SteeringManifold& manifold, std::span<const double> thetas) {
    return dual_norms(manifold, X, thetas).array().square();
}

namespace {

std::vector<Peak> spectrum_peaks(const CMat& X, const SteeringManifold& manifold, double zeta, bool polish) {
    const auto pts = scan_points(manifold.domain(), zeta);
    const RVec vals = dual_norms(manifold, X, pts);
    const double h = scan_step(pts, manifold.domain());
    std::vector<Peak> peaks;
    for (auto i : local_maxima(vals, manifold.domain().periodic)) {
        Peak p{pts[i], vals[static_cast<Eigen::Index>(i)]};
        if (polish) {
            const Peak q = polish_dual_peak(manifold, X, pts[i], h);
            if (q.value >= p.value) p = q;
        }
        peaks.push_back(p);
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
    return peaks;
}

void for_each_subset(int K, int n, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
        fn(idx);
        int i = n - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == K - n + i) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

double binomial(int K, int n) {
    return std::exp(std::lgamma(K + 1.0) - std::lgamma(n + 1.0) - std::lgamma(K - n + 1.0));
}

}  // namespace

BaselineEstimate nlls_ml_estimate(const CMat& X, const SteeringManifold& manifold, int n, const NllsOptions& opts) {
    const int m = manifold.size();
    if (n < 1 || n > m) throw std::invalid_argument("NLLS needs 1 <= n <= m");
    const double zeta = kPi / (8.0 * m);
    auto peaks = spectrum_peaks(X, manifold, zeta, false);
    if (static_cast<int>(peaks.size()) > 8 * n) peaks.resize(static_cast<std::size_t>(8 * n));
    // Too few peaks (merged sources): pad with uniformly spread positions.
    const Interval& dom = manifold.domain();
    for (int k = 0; static_cast<int>(peaks.size()) < n; ++k)
        peaks.push_back({dom.lo + (k + 0.5) * dom.length() / n, 0.0});
    const int K = static_cast<int>(peaks.size());

    std::vector<std::pair<double, std::vector<double>>> starts;
    auto consider = [&](const std::vector<int>& idx) {
        std::vector<double> th;
        for (int i : idx) th.push_back(peaks[static_cast<std::size_t>(i)].theta);
        starts.emplace_back(concentrated_cost(X, manifold, th), std::move(th));
    };
    if (binomial(K, n) <= 5000) {
        for_each_subset(K, n, consider);
    } else {
        // Greedy forward selection on the concentrated cost.
        std::vector<double> chosen;
        std::vector<bool> used(static_cast<std::size_t>(K), false);
        for (int s = 0; s < n; ++s) {
            int best = -1;
            double bc = INFINITY;
            for (int i = 0; i < K; ++i) {
                if (used[static_cast<std::size_t>(i)]) continue;
                auto th = chosen;
                th.push_back(peaks[static_cast<std::size_t>(i)].theta);
                const double c = concentrated_cost(X, manifold, th);
                if (c < bc) bc = c, best = i;
            }
            used[static_cast<std::size_t>(best)] = true;
            chosen.push_back(peaks[static_cast<std::size_t>(best)].theta);
        }
        starts.emplace_back(concentrated_cost(X, manifold, chosen), chosen);
    }
    std::stable_sort(starts.begin(), starts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> jitter(-0.25 * kPi / m, 0.25 * kPi / m);
    const int runs = std::max(1, opts.multistart);
    BaselineEstimate best;
    best.objective = INFINITY;
    for (int r = 0; r < runs; ++r) {
        std::vector<double> th = starts[static_cast<std::size_t>(r) % starts.size()].second;
        // Repeats of the same subset (few candidates) get jittered.
        if (r >= static_cast<int>(starts.size()))
            for (auto& t : th) t += jitter(rng);
        BaselineEstimate e = nlls_refine(X, manifold, th, opts);
        if (e.objective < best.objective) best = std::move(e);
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return best.thetas[a] < best.thetas[b]; });
    BaselineEstimate sorted = best;
    for (int k = 0; k < n; ++k) {
        sorted.thetas[k] = best.thetas[order[static_cast<std::size_t>(k)]];
        sorted.amplitudes.row(k) = best.amplitudes.row(order[static_cast<std::size_t>(k)]);
    }
    return sorted;
}

BaselineEstimate cbf_estimate(const CMat& X, const SteeringManifold& manifold, int n, double scan_fineness) {
    if (n < 1) throw std::invalid_argument("CBF needs n >= 1");
    const double zeta = scan_fineness > 0.0 ? scan_fineness : kPi / (64.0 * manifold.size());
    auto peaks = spectrum_peaks(X, manifold, zeta, true);
    BaselineEstimate est;
    est.method = BaselineMethod::cbf;
    est.flagged = static_cast<int>(peaks.size()) < n;
    if (static_cast<int>(peaks.size()) > n) peaks.resize(static_cast<std::size_t>(n));
    std::vector<double> th;
    for (const auto& p : peaks) th.push_back(p.theta);
    std::sort(th.begin(), th.end());
    est.thetas = Eigen::Map<RVec>(th.data(), static_cast<Eigen::Index>(th.size()));
    if (th.empty()) {
        est.amplitudes.resize(0, X.cols());
        est.objective = X.squaredNorm();
        return est;
    }
    const CMat A = steering_matrix(manifold, th);
    est.amplitudes = least_squares(A, X);
    est.objective = (X - A * est.amplitudes).squaredNorm();
    return est;
}

}  // namespace classdoa
