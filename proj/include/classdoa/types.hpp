#pragma once

#include <Eigen/Dense>

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace classdoa {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using CRowVec = Eigen::RowVectorXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr cplx kJ{0.0, 1.0};

// Parameter outside the manifold's admissible interval.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A linearization that does not exist at the requested point (rank-deficient
// A, singular R).
class SingularExpansionError : public std::runtime_error {
public:
    SingularExpansionError(const std::string& what, double condition)
        : std::runtime_error(what), condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

// Row 2-norms gamma_i of an amplitude matrix.
inline RVec row_norms(const CMat& S) { return S.rowwise().norm(); }

}  // namespace classdoa
