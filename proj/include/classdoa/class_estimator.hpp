#pragma once

#include "classdoa/grid_lasso.hpp"
#include "classdoa/kernels.hpp"

#include <optional>
#include <span>

namespace classdoa {

struct ClassOptions {
    int initial_grid_size = 0;     // 0: max(64, 8m)
    double verify_fineness = 0.0;  // 0: pi / (64 m)
    double tol = 1e-8;             // relative certificate tolerance
    int max_refinements = 60;
    int max_polish = 50;           // Newton iterations per polish round
    double merge_distance = 1e-7;  // atoms closer than this are fused
    double insert_threshold = 1e-9;
    GridLassoOptions grid{};
};

// Optimality certificate: alignment on the support, stationarity of the dual
// function at each atom, and the dual function bounded by lambda everywhere.
struct ClassCertificate {
    double dual_peak = 0.0;
    double dual_peak_location = 0.0;
    double alignment_error = 0.0;
    double stationarity_error = 0.0;
    bool passed = false;
};

struct ClassSolution {
    SparseRepresentation representation;
    double lambda = 0.0;
    CMat residual;
    ClassCertificate certificate;
    double objective = 0.0;
    int refinements = 0;
    // Set by solve_class_crosschecked when two differently initialized runs
    // both certify but disagree.
    bool non_unique = false;
    std::optional<SparseRepresentation> alternative;
};

class ClassCertificationError : public std::runtime_error {
public:
    ClassCertificationError(const std::string& what, ClassSolution best, double location, double violation)
        : std::runtime_error(what), best_(std::move(best)), location_(location), violation_(violation) {}
    const ClassSolution& best() const { return best_; }
    double violation_location() const { return location_; }
    double violation() const { return violation_; }

private:
    ClassSolution best_;
    double location_;
    double violation_;
};

double default_verify_fineness(const SteeringManifold& manifold);

// 0.5 ||X - A(theta) S||_F^2 + lambda * sum ||S_i||.
double class_objective(const CMat& X, const SteeringManifold& manifold, const SparseRepresentation& rep,
                       double lambda);

// Continuous LASSO estimate. `warm` replaces the initial grid solve with the
// given atoms (used when walking a lambda path).
ClassSolution solve_class(const CMat& X, const SteeringManifold& manifold, double lambda,
                          const ClassOptions& opts = {}, const SparseRepresentation* warm = nullptr);

// Runs solve_class from two different initial grids and flags disagreement.
ClassSolution solve_class_crosschecked(const CMat& X, const SteeringManifold& manifold, double lambda,
                                       const ClassOptions& opts = {}, double agreement = 1e-6);

ClassCertificate verify_class_optimality(const SparseRepresentation& candidate, double lambda, const CMat& X,
                                         const SteeringManifold& manifold, double tol,
                                         double verify_fineness = 0.0);
ClassCertificate verify_class_optimality(const ClassSolution& candidate, const CMat& X,
                                         const SteeringManifold& manifold, double tol,
                                         double verify_fineness = 0.0);

// Drops rows with gamma <= drop_tol. Idempotent.
SparseRepresentation reduce_representation(const SparseRepresentation& rep, double drop_tol);

// Delta(A, B) = max_{a in A} min_{b in B} |a - b|. Not symmetric. Empty A
// gives 0; nonempty A with empty B gives +infinity.
double set_distance(std::span<const double> from, std::span<const double> to);

// zeta = max over the domain of the distance to the nearest grid point.
double grid_fineness(const Grid& grid, const Interval& domain);

// Global maxima of f(phi) = ||a^H(phi) Z||_2 on a ULA, located as the
// unit-circle double roots of S(w) = sum_a T_a w^a - lambda_peak w^(m-1).
struct PropernessResult {
    int count = 0;
    RVec locations;
    double peak = 0.0;
    bool fallback_used = false;     // root multiplicity was ambiguous
    bool constant_function = false; // f is flat (e.g. Z Z^H proportional to I)
};

PropernessResult properness_max_count(const CMat& Z, const SteeringManifold& ula);

// Oracle used by the polynomial route's fallback: dense scan with local
// refinement, counting maxima within `rel_tol` of the top.
PropernessResult count_maxima_by_scan(const CMat& Z, const SteeringManifold& manifold, std::size_t points,
                                      double rel_tol);

}  // namespace classdoa
