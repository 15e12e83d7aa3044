#pragma once

#include "classdoa/array_model.hpp"

namespace classdoa {

// First-order expansion of the continuous LASSO estimate around a noiseless
// support: Delta theta = delta(dX) + lambda * beta.
struct PerturbationExpansion {
    RVec thetas;
    CMat S;        // true amplitudes, n x T
    CMat U;        // unit-norm rows, U = Gamma^-1 S
    CMat Xi;       // U U^H, unit diagonal
    RMat R;        // Re[D^H P D .* Xi^T], symmetric
    RVec beta;
    RVec gammas;
    CMat P_perp;   // projector onto the orthogonal complement of range(A)
    CMat A;
    CMat D;
    CMat gram_inv; // (A^H A)^-1
    double condition_R = 0.0;

    int order() const { return static_cast<int>(thetas.size()); }
};

// Throws SingularExpansionError when A is rank deficient or R is singular
// (condition number above `max_condition`).
PerturbationExpansion build_expansion(const SteeringManifold& manifold, const SparseRepresentation& truth,
                                      double max_condition = 1e12);

RVec delta_from_noise(const PerturbationExpansion& exp, const CMat& dX);

RVec predicted_theta_shift(const PerturbationExpansion& exp, double lambda, const CMat& dX);

// Amplitude change with Delta Q = diag(Gamma * theta_shift).
CMat predicted_amplitude_shift(const PerturbationExpansion& exp, double lambda, const CMat& dX);
CMat predicted_amplitude_shift(const PerturbationExpansion& exp, double lambda, const CMat& dX,
                               const RVec& theta_shift);

// A factor M with M M^H = Xi from a diagonally pivoted LDL^H decomposition.
CMat xi_sqrt(const CMat& Xi);

}  // namespace classdoa
