#pragma once

#include "classdoa/array_model.hpp"

#include <vector>

namespace classdoa {

// Sorted candidate positions on the parameter domain.
struct Grid {
    RVec points;

    // N points covering the domain with the smallest achievable fineness.
    static Grid uniform(const Interval& domain, int N);
    static Grid from(std::vector<double> pts);

    int size() const { return static_cast<int>(points.size()); }
    std::vector<double> list() const { return {points.data(), points.data() + points.size()}; }
};

struct GridLassoOptions {
    double tol = 1e-8;         // relative KKT tolerance
    double drop_rel = 1e-10;   // rows with gamma <= drop_rel * ||X||_F are zeroed
    int max_outer = 200;       // full sweep + active polish rounds
    int max_active_sweeps = 400;
    bool newton_polish = true;
    bool vertex_reduce = true;  // move a degenerate optimum to a vertex of the optimal set
};

// Optimality certificate for a fixed grid.
struct KktReport {
    double max_dual_norm = 0.0;            // max_i ||a_i^H N||
    double active_alignment_error = 0.0;   // max over active rows of ||a_i^H N - lambda S_i / gamma_i||
    bool passed = false;
};

struct GridLassoSolution {
    CMat S;                       // N x T
    std::vector<int> support;     // active row indices, increasing
    RVec support_thetas;
    CMat residual;                // X - A S
    double lambda = 0.0;
    double kkt_residual = 0.0;    // max(dual excess, alignment) / lambda
    double objective = 0.0;
    int sweeps = 0;
    std::vector<double> objective_history;
};

class LassoConvergenceError : public std::runtime_error {
public:
    LassoConvergenceError(const std::string& what, GridLassoSolution best)
        : std::runtime_error(what), best_(std::move(best)) {}
    const GridLassoSolution& best() const { return best_; }

private:
    GridLassoSolution best_;
};

// 0.5 ||X - A S||_F^2 + lambda * sum_i ||S_i||_2.
double group_lasso_objective(const CMat& X, const CMat& A, const CMat& S, double lambda);

// Group LASSO over an explicit dictionary. `warm` (same shape as the result)
// seeds the iteration. Support thetas are left empty.
GridLassoSolution solve_group_lasso(const CMat& X, const CMat& A, double lambda,
                                    const GridLassoOptions& opts = {}, const CMat* warm = nullptr);

GridLassoSolution solve_group_lasso(const CMat& X, const Grid& grid, const SteeringManifold& manifold,
                                    double lambda, const GridLassoOptions& opts = {});

KktReport kkt_check(const CMat& S, const CMat& X, const CMat& A, double lambda, double tol);
KktReport kkt_check(const GridLassoSolution& solution, const CMat& X, const Grid& grid,
                    const SteeringManifold& manifold, double tol);

// Smallest lambda for which the zero matrix is optimal.
double lambda_max(const CMat& X, const CMat& A);
double lambda_max(const CMat& X, const Grid& grid, const SteeringManifold& manifold);

// Minimum sum of row norms subject to ||A S - X||_F <= eps ||X||_F, reached
// by warm-started continuation lambda_k = lambda_max * 10^-k. The returned
// `lambda` is the last continuation value.
GridLassoSolution solve_noiseless_bp(const CMat& X, const Grid& grid, const SteeringManifold& manifold,
                                     double eps, const GridLassoOptions& opts = {});

}  // namespace classdoa
