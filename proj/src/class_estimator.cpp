#include "classdoa/class_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace classdoa {

double default_verify_fineness(const SteeringManifold& manifold) { return kPi / (64.0 * manifold.size()); }

double class_objective(const CMat& X, const SteeringManifold& manifold, const SparseRepresentation& rep,
                       double lambda) {
    if (rep.order() == 0) return 0.5 * X.squaredNorm();
    const CMat A = steering_matrix(manifold, rep.theta_list());
    return group_lasso_objective(X, A, rep.amplitudes, lambda);
}

SparseRepresentation reduce_representation(const SparseRepresentation& rep, double drop_tol) {
    const RVec g = rep.gammas();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (g[i] > drop_tol) keep.push_back(i);
    SparseRepresentation out;
    out.unit = rep.unit;
    out.thetas.resize(static_cast<Eigen::Index>(keep.size()));
    out.amplitudes.resize(static_cast<Eigen::Index>(keep.size()), rep.amplitudes.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.thetas[static_cast<Eigen::Index>(k)] = rep.thetas[keep[k]];
        out.amplitudes.row(static_cast<Eigen::Index>(k)) = rep.amplitudes.row(keep[k]);
    }
    return out;
}

double set_distance(std::span<const double> from, std::span<const double> to) {
    if (from.empty()) return 0.0;
    if (to.empty()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (double a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (double b : to) best = std::min(best, std::abs(a - b));
        worst = std::max(worst, best);
    }
    return worst;
}

double grid_fineness(const Grid& grid, const Interval& domain) {
    if (grid.size() == 0) throw std::invalid_argument("grid_fineness needs a nonempty grid");
    std::vector<double> p = grid.list();
    std::sort(p.begin(), p.end());
    double z = 0.0;
    for (std::size_t k = 1; k < p.size(); ++k) z = std::max(z, 0.5 * (p[k] - p[k - 1]));
    if (domain.periodic) {
        z = std::max(z, 0.5 * (domain.length() - (p.back() - p.front())));
    } else {
        z = std::max({z, p.front() - domain.lo, domain.hi - p.back()});
    }
    return z;
}

ClassCertificate verify_class_optimality(const SparseRepresentation& candidate, double lambda, const CMat& X,
                                         const SteeringManifold& manifold, double tol, double verify_fineness) {
    const double zeta = verify_fineness > 0.0 ? verify_fineness : default_verify_fineness(manifold);
    ClassCertificate cert;
    CMat N = X;
    if (candidate.order() > 0) {
        const auto mats = build_matrices(manifold, candidate.theta_list());
        N = X - mats.A * candidate.amplitudes;
        const CMat AN = mats.A.adjoint() * N;
        const CMat DN = mats.D.adjoint() * N;
        for (int i = 0; i < candidate.order(); ++i) {
            const double g = candidate.amplitudes.row(i).norm();
            if (g == 0.0) {
                // A zero row is not irreducible; treat it as a full violation.
                cert.alignment_error = std::max(cert.alignment_error, lambda);
                continue;
            }
            const CRowVec U = candidate.amplitudes.row(i) / g;
            cert.alignment_error = std::max(cert.alignment_error, (AN.row(i) - lambda * U).norm());
            const double st = std::abs((DN.row(i) * U.adjoint())(0, 0).real()) / mats.D.col(i).norm();
            cert.stationarity_error = std::max(cert.stationarity_error, st);
        }
    }
    const Peak p = dual_peak(manifold, N, zeta);
    cert.dual_peak = p.value;
    cert.dual_peak_location = p.theta;
    cert.passed = cert.dual_peak <= lambda * (1.0 + tol) && cert.alignment_error <= tol * lambda &&
                  cert.stationarity_error <= tol * lambda;
    return cert;
}

ClassCertificate verify_class_optimality(const ClassSolution& candidate, const CMat& X,
                                         const SteeringManifold& manifold, double tol, double verify_fineness) {
    return verify_class_optimality(candidate.representation, candidate.lambda, X, manifold, tol, verify_fineness);
}

namespace {

struct Atoms {
    std::vector<double> thetas;
    CMat S;  // n x T

    int n() const { return static_cast<int>(thetas.size()); }
};

void drop_rows(Atoms& at, double drop) {
    Atoms out;
    out.S.resize(0, at.S.cols());
    std::vector<Eigen::Index> keep;
    for (int i = 0; i < at.n(); ++i)
        if (at.S.row(i).norm() > drop) keep.push_back(i);
    out.S.resize(static_cast<Eigen::Index>(keep.size()), at.S.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.thetas.push_back(at.thetas[static_cast<std::size_t>(keep[k])]);
        out.S.row(static_cast<Eigen::Index>(k)) = at.S.row(keep[k]);
    }
    at = std::move(out);
}

void sort_atoms(Atoms& at) {
    std::vector<int> order(static_cast<std::size_t>(at.n()));
    for (int i = 0; i < at.n(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return at.thetas[static_cast<std::size_t>(a)] < at.thetas[static_cast<std::size_t>(b)];
    });
    Atoms out;
    out.S.resize(at.n(), at.S.cols());
    for (int k = 0; k < at.n(); ++k) {
        out.thetas.push_back(at.thetas[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
        out.S.row(k) = at.S.row(order[static_cast<std::size_t>(k)]);
    }
    at = std::move(out);
}

// Fuses atom pairs closer than `radius` whose amplitude rows point the same
// way. The merged position is the gamma-weighted mean.
bool merge_close(Atoms& at, const SteeringManifold& manifold, double radius, double min_alignment) {
    bool merged_any = false;
    bool again = true;
    while (again) {
        again = false;
        for (int i = 0; i < at.n() && !again; ++i) {
            for (int k = i + 1; k < at.n() && !again; ++k) {
                const double gap = manifold.difference(at.thetas[static_cast<std::size_t>(k)],
                                                       at.thetas[static_cast<std::size_t>(i)]);
                if (std::abs(gap) >= radius) continue;
                const double gi = at.S.row(i).norm(), gk = at.S.row(k).norm();
                const double inner = (at.S.row(i) * at.S.row(k).adjoint())(0, 0).real();
                if (gi > 0 && gk > 0 && inner < min_alignment * gi * gk) continue;
                const double w = (gi + gk) > 0 ? gk / (gi + gk) : 0.5;
                at.thetas[static_cast<std::size_t>(i)] =
                    manifold.normalize(at.thetas[static_cast<std::size_t>(i)] + w * gap);
                at.S.row(i) += at.S.row(k);
                at.thetas.erase(at.thetas.begin() + k);
                CMat rest(at.n(), at.S.cols());
                for (int r = 0, o = 0; r < at.S.rows(); ++r)
                    if (r != k) rest.row(o++) = at.S.row(r);
                at.S = std::move(rest);
                again = merged_any = true;
            }
        }
    }
    return merged_any;
}

// Amplitude re-solve at fixed positions: the group LASSO over the current
// atom dictionary, warm-started from the current rows.
void resolve_amplitudes(Atoms& at, const CMat& X, const SteeringManifold& manifold, double lambda,
                        const GridLassoOptions& gopts) {
    if (at.n() == 0) return;
    const CMat A = steering_matrix(manifold, at.thetas);
    try {
        at.S = solve_group_lasso(X, A, lambda, gopts, &at.S).S;
    } catch (const LassoConvergenceError& e) {
        at.S = e.best().S;
    }
}

// Joint damped Newton on (theta, Re S, Im S) over the active atoms. The
// gradient is analytic; the Hessian is a central difference of it.
void joint_newton(Atoms& at, const CMat& X, const SteeringManifold& manifold, double lambda, int max_iter) {
    const int n = at.n();
    if (n == 0) return;
    const int T = static_cast<int>(X.cols());
    const int dim = n + 2 * n * T;
    const Interval& dom = manifold.domain();

    auto unpack = [&](const RVec& z, std::vector<double>& th, CMat& S) {
        th.resize(static_cast<std::size_t>(n));
        S.resize(n, T);
        for (int i = 0; i < n; ++i) th[static_cast<std::size_t>(i)] = z[i];
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < T; ++t)
                S(i, t) = cplx(z[n + 2 * (i * T + t)], z[n + 2 * (i * T + t) + 1]);
    };
    auto pack = [&](const std::vector<double>& th, const CMat& S) {
        RVec z(dim);
        for (int i = 0; i < n; ++i) z[i] = th[static_cast<std::size_t>(i)];
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < T; ++t) {
                z[n + 2 * (i * T + t)] = S(i, t).real();
                z[n + 2 * (i * T + t) + 1] = S(i, t).imag();
            }
        return z;
    };
    // Positions are evaluated through normalize(), so trial points that leave
    // a periodic domain wrap and closed domains clamp.
    auto eval_matrices = [&](const RVec& z, CMat& A, CMat& D, CMat& S) {
        std::vector<double> th;
        unpack(z, th, S);
        A.resize(X.rows(), n);
        D.resize(X.rows(), n);
        for (int i = 0; i < n; ++i) {
            const double t = manifold.normalize(th[static_cast<std::size_t>(i)]);
            manifold.steering_into(t, A.col(i));
            manifold.derivative_into(t, D.col(i));
        }
    };
    auto objective = [&](const RVec& z) {
        CMat A, D, S;
        eval_matrices(z, A, D, S);
        return 0.5 * (X - A * S).squaredNorm() + lambda * S.rowwise().norm().sum();
    };
    auto gradient = [&](const RVec& z) {
        CMat A, D, S;
        eval_matrices(z, A, D, S);
        const CMat N = X - A * S;
        const CMat AN = A.adjoint() * N;
        const CMat DN = D.adjoint() * N;
        RVec g(dim);
        for (int i = 0; i < n; ++i) {
            g[i] = -(DN.row(i) * S.row(i).adjoint())(0, 0).real();
            const double gam = S.row(i).norm();
            for (int t = 0; t < T; ++t) {
                const cplx c = -AN(i, t) + (gam > 0 ? lambda * S(i, t) / gam : cplx(0.0));
                g[n + 2 * (i * T + t)] = c.real();
                g[n + 2 * (i * T + t) + 1] = c.imag();
            }
        }
        return g;
    };

    RVec z = pack(at.thetas, at.S);
    double f = objective(z);
    for (int it = 0; it < max_iter; ++it) {
        CMat S;
        std::vector<double> th;
        unpack(z, th, S);
        const RVec gam = S.rowwise().norm();
        if (gam.minCoeff() <= 1e-9 * gam.maxCoeff()) break;

        const RVec g = gradient(z);
        // Converged when every component is at rounding level for its scale;
        // ||d|| grows like m^1.5.
        const double dscale = std::pow(static_cast<double>(X.rows()), 1.5);
        bool small = g.tail(2 * n * T).lpNorm<Eigen::Infinity>() <= 1e-14 * lambda;
        for (int i = 0; i < n && small; ++i) small = std::abs(g[i]) <= 1e-14 * lambda * gam[i] * dscale;
        if (small) break;

        RMat H(dim, dim);
        for (int j = 0; j < dim; ++j) {
            // Amplitude steps stay well inside their own row so the penalty
            // term is differentiated away from its kink at zero.
            const double h = j < n ? 1e-6 / X.rows() : 1e-5 * gam[(j - n) / (2 * T)];
            RVec zp = z, zm = z;
            zp[j] += h;
            zm[j] -= h;
            H.col(j) = (gradient(zp) - gradient(zm)) / (2.0 * h);
        }
        H = 0.5 * (H + H.transpose()).eval();

        RVec step;
        double mu = 0.0;
        const double hscale = std::max(H.diagonal().cwiseAbs().maxCoeff(), 1e-300);
        for (int attempt = 0; attempt < 16; ++attempt) {
            Eigen::LDLT<RMat> ldlt(H + mu * RMat::Identity(dim, dim));
            if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0).all()) {
                step = ldlt.solve(-g);
                if (step.allFinite()) break;
            }
            mu = mu == 0.0 ? 1e-10 * hscale : mu * 10.0;
            step.resize(0);
        }
        if (step.size() == 0) break;
        const double slope = g.dot(step);
        if (!(slope < 0.0)) break;
        // Keep position steps inside a fraction of a beamwidth.
        const double cap = kPi / (4.0 * X.rows());
        const double big = step.head(n).cwiseAbs().maxCoeff();
        double alpha = big > cap ? cap / big : 1.0;
        bool accepted = false;
        RVec trial;
        double ft = f;
        if (-slope * alpha <= 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f)) {
            // The predicted decrease is below the rounding level of f, so the
            // gradient norm judges the step instead.
            trial = z + alpha * step;
            ft = objective(trial);
            accepted = gradient(trial).norm() < g.norm();
        } else {
            for (int bt = 0; bt < 50; ++bt) {
                trial = z + alpha * step;
                ft = objective(trial);
                if (ft <= f + 1e-4 * alpha * slope) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if (!accepted) break;
        for (int i = 0; i < n; ++i) trial[i] = manifold.normalize(trial[i]);
        const double moved = (trial - z).lpNorm<Eigen::Infinity>();
        z = trial;
        f = ft;
        if (moved <= 1e-15 * std::max(1.0, z.lpNorm<Eigen::Infinity>())) break;
    }
    unpack(z, at.thetas, at.S);
    for (auto& t : at.thetas) t = dom.wrap(t);
}

SparseRepresentation to_representation(const Atoms& at, AngleUnit unit) {
    SparseRepresentation r;
    r.unit = unit;
    r.thetas = Eigen::Map<const RVec>(at.thetas.data(), at.n());
    r.amplitudes = at.S;
    return r;
}

ClassSolution finish(const Atoms& at, const CMat& X, const SteeringManifold& manifold, double lambda,
                     const ClassCertificate& cert, int refinements) {
    ClassSolution sol;
    sol.representation = to_representation(at, manifold.unit());
    if (at.n() == 0) sol.representation = SparseRepresentation::empty(static_cast<int>(X.cols()), manifold.unit());
    sol.lambda = lambda;
    sol.residual = at.n() ? CMat(X - steering_matrix(manifold, at.thetas) * at.S) : X;
    sol.certificate = cert;
    sol.objective = class_objective(X, manifold, sol.representation, lambda);
    sol.refinements = refinements;
    // A flat dual function touches lambda everywhere, so the optimum is not
    // unique and may need m or more atoms.
    if (manifold.is_ula() && cert.passed && at.n() >= manifold.size() && sol.residual.norm() > 0.0)
        sol.non_unique = properness_max_count(sol.residual, manifold).constant_function;
    return sol;
}

}  // namespace

ClassSolution solve_class(const CMat& X, const SteeringManifold& manifold, double lambda, const ClassOptions& opts,
                          const SparseRepresentation* warm) {
    if (!(lambda > 0.0)) throw std::invalid_argument("solve_class needs lambda > 0");
    if (X.rows() != manifold.size()) throw std::invalid_argument("data rows differ from the array size");
    const int m = manifold.size();
    const int T = static_cast<int>(X.cols());
    const double zeta = opts.verify_fineness > 0.0 ? opts.verify_fineness : default_verify_fineness(manifold);
    const double drop = opts.grid.drop_rel * X.norm();

    Atoms at;
    at.S.resize(0, T);
    if (warm && warm->order() > 0) {
        if (warm->snapshots() != T) throw std::invalid_argument("warm start has the wrong snapshot count");
        at.thetas = warm->theta_list();
        at.S = warm->amplitudes;
    } else {
        const Peak top = dual_peak(manifold, X, zeta);
        if (lambda >= top.value) {
            const auto cert = verify_class_optimality(SparseRepresentation::empty(T, manifold.unit()), lambda, X,
                                                      manifold, opts.tol, zeta);
            return finish(at, X, manifold, lambda, cert, 0);
        }
        const int N0 = opts.initial_grid_size > 0 ? opts.initial_grid_size : std::max(64, 8 * m);
        const Grid grid = Grid::uniform(manifold.domain(), N0);
        GridLassoSolution gl;
        try {
            gl = solve_group_lasso(X, grid, manifold, lambda, opts.grid);
        } catch (const LassoConvergenceError& e) {
            gl = e.best();
            gl.support_thetas.resize(static_cast<Eigen::Index>(gl.support.size()));
            for (std::size_t k = 0; k < gl.support.size(); ++k)
                gl.support_thetas[static_cast<Eigen::Index>(k)] = grid.points[gl.support[k]];
        }
        for (std::size_t k = 0; k < gl.support.size(); ++k) {
            at.thetas.push_back(gl.support_thetas[static_cast<Eigen::Index>(k)]);
        }
        at.S.resize(static_cast<Eigen::Index>(gl.support.size()), T);
        for (std::size_t k = 0; k < gl.support.size(); ++k)
            at.S.row(static_cast<Eigen::Index>(k)) = gl.S.row(gl.support[k]);
        // Grid LASSO splits an off-grid source over neighbouring points.
        const double h = grid.size() > 1 ? grid.points[1] - grid.points[0] : manifold.domain().length();
        merge_close(at, manifold, 1.5 * h, 0.0);
    }

    ClassCertificate cert;
    double worst_loc = 0.0, worst_val = 0.0;
    const double exclusion = std::max(2.0 * zeta, 1e-6);
    for (int r = 0; r <= opts.max_refinements; ++r) {
        resolve_amplitudes(at, X, manifold, lambda, opts.grid);
        drop_rows(at, drop);
        merge_close(at, manifold, opts.merge_distance, 0.0);
        joint_newton(at, X, manifold, lambda, opts.max_polish);
        drop_rows(at, drop);
        merge_close(at, manifold, opts.merge_distance, 0.0);
        sort_atoms(at);

        const auto rep = to_representation(at, manifold.unit());
        cert = verify_class_optimality(rep, lambda, X, manifold, opts.tol, zeta);
        if (cert.passed) return finish(at, X, manifold, lambda, cert, r);
        worst_loc = cert.dual_peak_location;
        worst_val = cert.dual_peak;

        const CMat N = at.n() ? CMat(X - steering_matrix(manifold, at.thetas) * at.S) : X;
        for (const Peak& p : dual_peaks_above(manifold, N, zeta, lambda * (1.0 + opts.insert_threshold))) {
            bool near = false;
            for (double t : at.thetas) near = near || std::abs(manifold.difference(p.theta, t)) < exclusion;
            if (near) continue;
            at.thetas.push_back(p.theta);
            at.S.conservativeResize(at.n(), T);
            at.S.row(at.n() - 1).setZero();
        }
    }
    throw ClassCertificationError("CLASS certification failed after " + std::to_string(opts.max_refinements) +
                                      " refinements; largest dual value " + std::to_string(worst_val) +
                                      " at theta " + std::to_string(worst_loc),
                                  finish(at, X, manifold, lambda, cert, opts.max_refinements), worst_loc,
                                  worst_val);
}

ClassSolution solve_class_crosschecked(const CMat& X, const SteeringManifold& manifold, double lambda,
                                       const ClassOptions& opts, double agreement) {
    ClassSolution first = solve_class(X, manifold, lambda, opts);
    ClassOptions other = opts;
    const int N0 = opts.initial_grid_size > 0 ? opts.initial_grid_size : std::max(64, 8 * manifold.size());
    other.initial_grid_size = N0 + 7;
    ClassSolution second = solve_class(X, manifold, lambda, other);
    const auto a = first.representation.theta_list();
    const auto b = second.representation.theta_list();
    const bool same = a.size() == b.size() && set_distance(a, b) <= agreement && set_distance(b, a) <= agreement;
    if (!same) {
        first.non_unique = true;
        first.alternative = second.representation;
    }
    return first;
}

}  // namespace classdoa
