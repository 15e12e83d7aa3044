#include "classdoa/matrix_io.hpp"

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace classdoa {

namespace {

bool next_content_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        return true;
    }
    return false;
}

cplx parse_token(const std::string& tok) {
    const auto comma = tok.find(',');
    std::size_t used = 0;
    try {
        if (comma == std::string::npos) {
            const double re = std::stod(tok, &used);
            if (used == tok.size()) return re;
        } else {
            const std::string a = tok.substr(0, comma), b = tok.substr(comma + 1);
            std::size_t ub = 0;
            const double re = std::stod(a, &used);
            const double im = std::stod(b, &ub);
            if (used == a.size() && ub == b.size()) return {re, im};
        }
    } catch (const std::exception&) {
    }
    throw std::runtime_error("malformed matrix entry '" + tok + "'");
}

std::string expect_label(std::istream& in, const std::string& label) {
    std::string line;
    if (!next_content_line(in, line)) throw std::runtime_error("missing '" + label + "' block");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key != label) throw std::runtime_error("expected '" + label + "', found '" + key + "'");
    std::string rest;
    std::getline(ss, rest);
    return rest;
}

}  // namespace

void write_matrix(std::ostream& out, const CMat& M) {
    out << M.rows() << ' ' << M.cols() << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            out << (j ? " " : "") << M(i, j).real() << ',' << M(i, j).imag();
        out << '\n';
    }
}

void write_real_matrix(std::ostream& out, const RMat& M) { write_matrix(out, M.cast<cplx>()); }

CMat read_matrix(std::istream& in) {
    std::string line;
    if (!next_content_line(in, line)) throw std::runtime_error("missing matrix header");
    std::istringstream hs(line);
    long rows = -1, cols = -1;
    hs >> rows >> cols;
    if (!hs || rows < 0 || cols < 0) throw std::runtime_error("bad matrix header '" + line + "'");
    CMat M(rows, cols);
    for (long i = 0; i < rows; ++i) {
        if (!next_content_line(in, line)) throw std::runtime_error("matrix ends after " + std::to_string(i) + " rows");
        std::istringstream rs(line);
        std::string tok;
        long j = 0;
        while (rs >> tok) {
            if (j >= cols) throw std::runtime_error("too many entries in matrix row " + std::to_string(i));
            M(i, j++) = parse_token(tok);
        }
        if (j != cols) throw std::runtime_error("too few entries in matrix row " + std::to_string(i));
    }
    return M;
}

CMat load_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_matrix(in);
}

void save_matrix_file(const std::string& path, const CMat& M) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_matrix(out, M);
}

void write_solution(std::ostream& out, const ClassSolution& sol) {
    const auto& c = sol.certificate;
    out << std::setprecision(17);
    out << "lambda " << sol.lambda << '\n';
    out << "unit " << to_string(sol.representation.unit) << '\n';
    out << "objective " << sol.objective << '\n';
    out << "certificate " << (c.passed ? "passed" : "failed") << ' ' << c.dual_peak << ' ' << c.dual_peak_location
        << ' ' << c.alignment_error << ' ' << c.stationarity_error << '\n';
    out << "non_unique " << (sol.non_unique ? 1 : 0) << '\n';
    out << "thetas\n";
    write_matrix(out, sol.representation.thetas.cast<cplx>());
    out << "amplitudes\n";
    write_matrix(out, sol.representation.amplitudes);
}

ClassSolution read_solution(std::istream& in) {
    ClassSolution sol;
    sol.lambda = std::stod(expect_label(in, "lambda"));
    {
        std::istringstream ss(expect_label(in, "unit"));
        std::string u;
        ss >> u;
        if (u == "electrical") sol.representation.unit = AngleUnit::electrical;
        else if (u == "physical") sol.representation.unit = AngleUnit::physical;
        else throw std::runtime_error("unknown angle unit '" + u + "'");
    }
    sol.objective = std::stod(expect_label(in, "objective"));
    {
        std::istringstream ss(expect_label(in, "certificate"));
        std::string verdict;
        auto& c = sol.certificate;
        ss >> verdict >> c.dual_peak >> c.dual_peak_location >> c.alignment_error >> c.stationarity_error;
        if (!ss || (verdict != "passed" && verdict != "failed")) throw std::runtime_error("malformed certificate line");
        c.passed = verdict == "passed";
    }
    sol.non_unique = std::stoi(expect_label(in, "non_unique")) != 0;
    expect_label(in, "thetas");
    const CMat th = read_matrix(in);
    if (th.cols() != 1 && th.rows() != 0) throw std::runtime_error("thetas must be a column");
    sol.representation.thetas = th.size() ? RVec(th.real().col(0)) : RVec(0);
    expect_label(in, "amplitudes");
    sol.representation.amplitudes = read_matrix(in);
    if (sol.representation.amplitudes.rows() != sol.representation.thetas.size())
        throw std::runtime_error("amplitude rows differ from the number of thetas");
    return sol;
}

void write_expansion(std::ostream& out, const PerturbationExpansion& e) {
    out << "thetas\n";
    write_matrix(out, e.thetas.cast<cplx>());
    out << "gamma\n";
    write_matrix(out, e.gammas.cast<cplx>());
    out << "Xi\n";
    write_matrix(out, e.Xi);
    out << "R\n";
    write_real_matrix(out, e.R);
    out << "beta\n";
    write_matrix(out, e.beta.cast<cplx>());
}

}  // namespace classdoa
