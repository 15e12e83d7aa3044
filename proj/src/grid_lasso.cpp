#include "classdoa/grid_lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace classdoa {

Grid Grid::uniform(const Interval& domain, int N) {
    if (N < 1) throw std::invalid_argument("grid needs N >= 1");
    RVec pts(N);
    if (N == 1) {
        pts[0] = 0.5 * (domain.lo + domain.hi);
    } else if (domain.periodic) {
        const double h = domain.length() / N;
        for (int k = 0; k < N; ++k) pts[k] = domain.lo + k * h;
    } else {
        const double h = domain.length() / (N - 1);
        for (int k = 0; k < N; ++k) pts[k] = domain.lo + k * h;
        pts[N - 1] = domain.hi;
    }
    return {pts};
}

Grid Grid::from(std::vector<double> pts) {
    if (pts.empty()) throw std::invalid_argument("grid must be nonempty");
    std::sort(pts.begin(), pts.end());
    if (std::adjacent_find(pts.begin(), pts.end(), std::greater_equal<>()) != pts.end())
        throw std::invalid_argument("grid points must be strictly increasing");
    return {Eigen::Map<RVec>(pts.data(), static_cast<Eigen::Index>(pts.size()))};
}

double group_lasso_objective(const CMat& X, const CMat& A, const CMat& S, double lambda) {
    return 0.5 * (X - A * S).squaredNorm() + lambda * S.rowwise().norm().sum();
}

double lambda_max(const CMat& X, const CMat& A) {
    if (A.cols() == 0) return 0.0;
    return (A.adjoint() * X).rowwise().norm().maxCoeff();
}

double lambda_max(const CMat& X, const Grid& grid, const SteeringManifold& manifold) {
    return lambda_max(X, steering_matrix(manifold, grid.list()));
}

KktReport kkt_check(const CMat& S, const CMat& X, const CMat& A, double lambda, double tol) {
    if (S.rows() != A.cols() || S.cols() != X.cols() || A.rows() != X.rows())
        throw std::invalid_argument("kkt_check: inconsistent dimensions");
    const CMat N = X - A * S;
    const CMat corr = A.adjoint() * N;
    KktReport r;
    r.max_dual_norm = corr.rows() ? corr.rowwise().norm().maxCoeff() : 0.0;
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        const double g = S.row(i).norm();
        if (g == 0.0) continue;
        const double err = (corr.row(i) - (lambda / g) * S.row(i)).norm();
        r.active_alignment_error = std::max(r.active_alignment_error, err);
    }
    r.passed = r.max_dual_norm <= lambda * (1.0 + tol) && r.active_alignment_error <= tol * lambda;
    return r;
}

KktReport kkt_check(const GridLassoSolution& solution, const CMat& X, const Grid& grid,
                    const SteeringManifold& manifold, double tol) {
    return kkt_check(solution.S, X, steering_matrix(manifold, grid.list()), solution.lambda, tol);
}

namespace {

// Dense Newton on the smooth restriction of the objective to the active rows.
// Real unknowns are ordered (t, re/im, row). Returns true if it moved.
bool newton_polish(const CMat& X, const CMat& A, double lambda, const std::vector<int>& active, CMat& S) {
    const int k = static_cast<int>(active.size());
    const int T = static_cast<int>(X.cols());
    if (k == 0) return false;
    CMat Aw(A.rows(), k);
    for (int i = 0; i < k; ++i) Aw.col(i) = A.col(active[i]);
    const CMat G = Aw.adjoint() * Aw;
    const CMat B = Aw.adjoint() * X;
    const int n = 2 * k * T;
    auto idx = [k](int t, int part, int row) { return t * 2 * k + part * k + row; };

    CMat Sw(k, T);
    for (int i = 0; i < k; ++i) Sw.row(i) = S.row(active[i]);
    auto objective = [&](const CMat& W) {
        return 0.5 * (X - Aw * W).squaredNorm() + lambda * W.rowwise().norm().sum();
    };

    RMat H(n, n);
    RVec g(n);
    bool moved = false;
    double f = objective(Sw);
    for (int it = 0; it < 30; ++it) {
        const RVec gam = Sw.rowwise().norm();
        if (gam.minCoeff() <= 1e-300) break;
        const CMat Gr = G * Sw - B;
        H.setZero();
        for (int t = 0; t < T; ++t) {
            for (int i = 0; i < k; ++i) {
                g[idx(t, 0, i)] = Gr(i, t).real() + lambda * Sw(i, t).real() / gam[i];
                g[idx(t, 1, i)] = Gr(i, t).imag() + lambda * Sw(i, t).imag() / gam[i];
                for (int l = 0; l < k; ++l) {
                    H(idx(t, 0, i), idx(t, 0, l)) = G(i, l).real();
                    H(idx(t, 0, i), idx(t, 1, l)) = -G(i, l).imag();
                    H(idx(t, 1, i), idx(t, 0, l)) = G(i, l).imag();
                    H(idx(t, 1, i), idx(t, 1, l)) = G(i, l).real();
                }
            }
        }
        for (int i = 0; i < k; ++i) {
            const double c = lambda / gam[i];
            for (int t = 0; t < T; ++t)
                for (int p = 0; p < 2; ++p) {
                    const double vp = p == 0 ? Sw(i, t).real() : Sw(i, t).imag();
                    for (int u = 0; u < T; ++u)
                        for (int q = 0; q < 2; ++q) {
                            const double vq = q == 0 ? Sw(i, u).real() : Sw(i, u).imag();
                            const double eye = (t == u && p == q) ? 1.0 : 0.0;
                            H(idx(t, p, i), idx(u, q, i)) += c * (eye - vp * vq / (gam[i] * gam[i]));
                        }
                }
        }
        const double gnorm = g.lpNorm<Eigen::Infinity>();
        const double scale = std::max(1.0, B.cwiseAbs().maxCoeff());
        if (gnorm <= 1e-15 * scale) break;

        RVec step;
        double mu = 0.0;
        const double hscale = H.diagonal().cwiseAbs().maxCoeff();
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::LDLT<RMat> ldlt(H + mu * RMat::Identity(n, n));
            if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all()) {
                step = ldlt.solve(-g);
                if (step.allFinite()) break;
            }
            mu = mu == 0.0 ? 1e-12 * hscale : mu * 100.0;
            step.resize(0);
        }
        if (step.size() == 0) break;

        CMat P(k, T);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < k; ++i) P(i, t) = cplx(step[idx(t, 0, i)], step[idx(t, 1, i)]);
        const double slope = g.dot(step);
        if (slope >= 0.0) break;
        double alpha = 1.0;
        CMat trial;
        double ft = 0.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            trial = Sw + alpha * P;
            ft = objective(trial);
            if (ft <= f + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
        const double change = (trial - Sw).norm();
        Sw = trial;
        f = ft;
        moved = true;
        if (change <= 1e-15 * std::max(1.0, Sw.norm())) break;
    }
    if (moved)
        for (int i = 0; i < k; ++i) S.row(active[i]) = Sw.row(i);
    return moved;
}

// Every optimal S has the same residual, and its active rows are gamma_i U_i
// with fixed unit directions U_i, so the optimal set is the polytope
// {gamma >= 0 : sum_i gamma_i a_i U_i = fitted}. Walking along null vectors of
// that linear map until a coefficient hits zero ends at a vertex, whose
// support is at most the map's rank.
void reduce_to_vertex(const CMat& A, const std::vector<int>& active, CMat& S) {
    std::vector<int> act = active;
    const Eigen::Index m = A.rows(), T = S.cols();
    while (act.size() > 1) {
        const Eigen::Index k = static_cast<Eigen::Index>(act.size());
        RMat M(2 * m * T, k);
        RVec gam(k);
        for (Eigen::Index c = 0; c < k; ++c) {
            const int i = act[static_cast<std::size_t>(c)];
            gam[c] = S.row(i).norm();
            const CMat col = A.col(i) * (S.row(i) / gam[c]);
            const Eigen::Map<const CVec> v(col.data(), m * T);
            M.col(c) << v.real(), v.imag();
        }
        Eigen::JacobiSVD<RMat> svd(M, Eigen::ComputeFullV);
        const RVec& sv = svd.singularValues();
        const Eigen::Index rank = (sv.array() > 1e-9 * sv[0]).count();
        if (k <= rank) break;
        RVec v = svd.matrixV().col(k - 1);
        if (v.maxCoeff() <= 0.0) v = -v;
        double t = std::numeric_limits<double>::infinity();
        Eigen::Index hit = -1;
        for (Eigen::Index c = 0; c < k; ++c)
            if (v[c] > 0.0 && gam[c] / v[c] < t) t = gam[c] / v[c], hit = c;
        for (Eigen::Index c = 0; c < k; ++c) {
            const int i = act[static_cast<std::size_t>(c)];
            const double g = c == hit ? 0.0 : std::max(0.0, gam[c] - t * v[c]);
            S.row(i) *= g / gam[c];
        }
        act.erase(act.begin() + hit);
    }
}

}  // namespace

GridLassoSolution solve_group_lasso(const CMat& X, const CMat& A, double lambda, const GridLassoOptions& opts,
                                    const CMat* warm) {
    if (!(lambda > 0.0)) throw std::invalid_argument("solve_group_lasso needs lambda > 0");
    if (A.cols() == 0) throw std::invalid_argument("solve_group_lasso needs a nonempty dictionary");
    if (A.rows() != X.rows()) throw std::invalid_argument("dictionary and data row counts differ");
    const Eigen::Index N = A.cols();
    const Eigen::Index T = X.cols();

    GridLassoSolution sol;
    sol.lambda = lambda;
    sol.S = CMat::Zero(N, T);
    if (warm) {
        if (warm->rows() != N || warm->cols() != T) throw std::invalid_argument("warm start has wrong shape");
        sol.S = *warm;
    }
    const RVec colnorm2 = A.colwise().squaredNorm().transpose();
    const double drop = opts.drop_rel * X.norm();

    // Zero is optimal at or above lambda_max; return it exactly.
    if (!warm && lambda >= lambda_max(X, A)) {
        sol.residual = X;
        sol.objective = 0.5 * X.squaredNorm();
        sol.objective_history = {sol.objective};
        sol.kkt_residual = std::max(0.0, lambda_max(X, A) / lambda - 1.0);
        return sol;
    }

    CMat R = X - A * sol.S;
    auto update_row = [&](Eigen::Index i) {
        if (colnorm2[i] == 0.0) return 0.0;
        const CRowVec old = sol.S.row(i);
        const CRowVec c = A.col(i).adjoint() * R + colnorm2[i] * old;
        const double cn = c.norm();
        CRowVec fresh = CRowVec::Zero(T);
        if (cn > lambda) fresh = c * ((1.0 - lambda / cn) / colnorm2[i]);
        const CRowVec delta = old - fresh;
        const double change = delta.norm();
        if (change > 0.0) {
            R.noalias() += A.col(i) * delta;
            sol.S.row(i) = fresh;
        }
        return change * std::sqrt(colnorm2[i]);
    };
    auto active_rows = [&]() {
        std::vector<int> act;
        for (Eigen::Index i = 0; i < N; ++i)
            if (sol.S.row(i).norm() > 0.0) act.push_back(static_cast<int>(i));
        return act;
    };
    auto record = [&]() { sol.objective_history.push_back(group_lasso_objective(X, A, sol.S, lambda)); };

    record();
    const double xscale = std::max(X.norm(), 1e-300);
    KktReport report;
    for (int outer = 0; outer < opts.max_outer; ++outer) {
        for (Eigen::Index i = 0; i < N; ++i) update_row(i);
        ++sol.sweeps;
        record();
        auto act = active_rows();
        for (int s = 0; s < opts.max_active_sweeps && !act.empty(); ++s) {
            double biggest = 0.0;
            for (int i : act) biggest = std::max(biggest, update_row(i));
            ++sol.sweeps;
            if (biggest <= 1e-13 * xscale) break;
        }
        record();
        act = active_rows();
        if (opts.newton_polish && newton_polish(X, A, lambda, act, sol.S)) {
            R = X - A * sol.S;
            record();
        }
        for (int i : act)
            if (sol.S.row(i).norm() <= drop) sol.S.row(i).setZero();
        R = X - A * sol.S;
        report = kkt_check(sol.S, X, A, lambda, opts.tol);
        if (report.passed) break;
    }

    if (report.passed && opts.vertex_reduce) {
        const auto act = active_rows();
        if (static_cast<Eigen::Index>(act.size()) > 2 * A.rows() - 1) {
            CMat reduced = sol.S;
            reduce_to_vertex(A, act, reduced);
            const KktReport r2 = kkt_check(reduced, X, A, lambda, opts.tol);
            if (r2.passed) {
                sol.S = reduced;
                R = X - A * sol.S;
                report = r2;
                record();
            }
        }
    }

    sol.residual = R;
    sol.objective = group_lasso_objective(X, A, sol.S, lambda);
    sol.kkt_residual =
        std::max(std::max(0.0, report.max_dual_norm / lambda - 1.0), report.active_alignment_error / lambda);
    sol.support = active_rows();
    if (!report.passed) {
        throw LassoConvergenceError("group LASSO did not certify within the iteration cap (kkt residual " +
                                        std::to_string(sol.kkt_residual) + ")",
                                    sol);
    }
    return sol;
}

GridLassoSolution solve_group_lasso(const CMat& X, const Grid& grid, const SteeringManifold& manifold,
                                    double lambda, const GridLassoOptions& opts) {
    const CMat A = steering_matrix(manifold, grid.list());
    GridLassoSolution sol = solve_group_lasso(X, A, lambda, opts);
    sol.support_thetas.resize(static_cast<Eigen::Index>(sol.support.size()));
    for (std::size_t k = 0; k < sol.support.size(); ++k)
        sol.support_thetas[static_cast<Eigen::Index>(k)] = grid.points[sol.support[k]];
    return sol;
}

GridLassoSolution solve_noiseless_bp(const CMat& X, const Grid& grid, const SteeringManifold& manifold, double eps,
                                     const GridLassoOptions& opts) {
    const CMat A = steering_matrix(manifold, grid.list());
    const double xnorm = X.norm();
    GridLassoSolution sol;
    if (xnorm == 0.0) {
        sol.S = CMat::Zero(A.cols(), X.cols());
        sol.residual = X;
        sol.support_thetas.resize(0);
        return sol;
    }
    // Feasibility: X must lie in the range of the grid dictionary.
    Eigen::CompleteOrthogonalDecomposition<CMat> cod(A);
    const double ls_res = (X - A * cod.solve(X)).norm();
    if (ls_res > eps * xnorm)
        throw std::runtime_error("noiseless BP infeasible: data not in the range of the grid dictionary (residual " +
                                 std::to_string(ls_res / xnorm) + ")");

    const double lmax = lambda_max(X, A);
    CMat warm = CMat::Zero(A.cols(), X.cols());
    for (int k = 1; k <= 16; ++k) {
        const double lambda = lmax * std::pow(10.0, -k);
        sol = solve_group_lasso(X, A, lambda, opts, &warm);
        warm = sol.S;
        if (sol.residual.norm() <= eps * xnorm) break;
    }
    if (sol.residual.norm() > eps * xnorm)
        throw std::runtime_error("noiseless BP: continuation did not reach the feasibility tolerance");
    sol.support_thetas.resize(static_cast<Eigen::Index>(sol.support.size()));
    for (std::size_t k = 0; k < sol.support.size(); ++k)
        sol.support_thetas[static_cast<Eigen::Index>(k)] = grid.points[sol.support[k]];
    return sol;
}

}  // namespace classdoa
