#pragma once

#include "classdoa/class_estimator.hpp"
#include "classdoa/perturbation.hpp"

#include <iosfwd>
#include <string>

namespace classdoa {

// Plain-text complex matrix: a "rows cols" line, then one line per row of
// whitespace-separated "re,im" tokens. '#' lines are comments.
void write_matrix(std::ostream& out, const CMat& M);
CMat read_matrix(std::istream& in);
void write_real_matrix(std::ostream& out, const RMat& M);

CMat load_matrix_file(const std::string& path);
void save_matrix_file(const std::string& path, const CMat& M);

// Solution with its certificate, as labelled blocks.
void write_solution(std::ostream& out, const ClassSolution& sol);
ClassSolution read_solution(std::istream& in);

// Xi, R, beta and gamma of an expansion, for cross-checking.
void write_expansion(std::ostream& out, const PerturbationExpansion& exp);

}  // namespace classdoa
