#include "classdoa/perturbation.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace classdoa {

PerturbationExpansion build_expansion(const SteeringManifold& manifold, const SparseRepresentation& truth,
                                      double max_condition) {
    const int n = truth.order();
    if (n == 0) throw std::invalid_argument("expansion needs a nonempty support");
    PerturbationExpansion e;
    e.thetas = truth.thetas;
    e.S = truth.amplitudes;
    e.gammas = truth.gammas();
    if ((e.gammas.array() <= 0.0).any()) throw std::invalid_argument("expansion needs an irreducible support");
    auto mats = build_matrices(manifold, truth.theta_list());
    e.A = std::move(mats.A);
    e.D = std::move(mats.D);
    const int m = manifold.size();

    Eigen::JacobiSVD<CMat> svd(e.A);
    const RVec sv = svd.singularValues();
    const double cond_A = sv[0] / sv[sv.size() - 1];
    if (n > m || !(cond_A < 1e12))
        throw SingularExpansionError("steering matrix is rank deficient at the expansion point", cond_A);

    const CMat G = e.A.adjoint() * e.A;
    e.gram_inv = G.llt().solve(CMat::Identity(n, n));
    e.P_perp = CMat::Identity(m, m) - e.A * e.gram_inv * e.A.adjoint();
    e.P_perp = (0.5 * (e.P_perp + e.P_perp.adjoint())).eval();

    e.U = e.gammas.cwiseInverse().asDiagonal() * e.S;
    e.Xi = e.U * e.U.adjoint();
    for (int i = 0; i < n; ++i) e.Xi(i, i) = 1.0;

    const CMat BPB = e.D.adjoint() * e.P_perp * e.D;
    e.R = BPB.cwiseProduct(e.Xi.transpose()).real();
    e.R = (0.5 * (e.R + e.R.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<RMat> es(e.R);
    const RVec ev = es.eigenvalues();
    const double lo = ev.cwiseAbs().minCoeff(), hi = ev.cwiseAbs().maxCoeff();
    e.condition_R = lo > 0 ? hi / lo : INFINITY;
    if (!(e.condition_R <= max_condition))
        throw SingularExpansionError("R is singular at the expansion point (condition " +
                                         std::to_string(e.condition_R) + ")",
                                     e.condition_R);

    const CMat W = e.A * e.gram_inv * e.Xi;  // column i: A (A^H A)^-1 xi_i
    RVec r(n);
    for (int i = 0; i < n; ++i) r[i] = e.D.col(i).dot(W.col(i)).real();
    e.beta = e.gammas.cwiseInverse().asDiagonal() * e.R.ldlt().solve(r);
    return e;
}

RVec delta_from_noise(const PerturbationExpansion& e, const CMat& dX) {
    if (dX.rows() != e.A.rows() || dX.cols() != e.S.cols())
        throw std::invalid_argument("noise matrix has the wrong shape");
    const CMat DPX = e.D.adjoint() * e.P_perp * dX;  // n x T
    const int n = e.order();
    RVec r(n);
    for (int i = 0; i < n; ++i) r[i] = (DPX.row(i) * e.U.row(i).adjoint())(0, 0).real();
    return e.gammas.cwiseInverse().asDiagonal() * e.R.ldlt().solve(r);
}

RVec predicted_theta_shift(const PerturbationExpansion& e, double lambda, const CMat& dX) {
    return delta_from_noise(e, dX) + lambda * e.beta;
}

CMat predicted_amplitude_shift(const PerturbationExpansion& e, double lambda, const CMat& dX,
                               const RVec& theta_shift) {
    const RVec q = e.gammas.cwiseProduct(theta_shift);
    const CMat moved = e.D * q.asDiagonal() * e.U;
    return e.gram_inv * (e.A.adjoint() * (dX - moved) - lambda * e.U);
}

CMat predicted_amplitude_shift(const PerturbationExpansion& e, double lambda, const CMat& dX) {
    return predicted_amplitude_shift(e, lambda, dX, predicted_theta_shift(e, lambda, dX));
}

CMat xi_sqrt(const CMat& Xi) {
    Eigen::LDLT<CMat> ldlt(Xi);
    const CMat L = ldlt.matrixL();
    const RVec d = ldlt.vectorD().real().cwiseMax(0.0).cwiseSqrt();
    CMat M = L * d.asDiagonal();
    // Xi = P^T L D L^H P
    return ldlt.transpositionsP().transpose() * M;
}

}  // namespace classdoa
