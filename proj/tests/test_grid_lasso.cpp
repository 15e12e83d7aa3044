#include "classdoa/class_estimator.hpp"
#include "classdoa/grid_lasso.hpp"

#include "doctest.h"
#include "oracles.hpp"

using namespace classdoa;
using doctest::Approx;

namespace {

struct Instance {
    CMat X;
    CMat A;
};

Instance random_instance(std::mt19937_64& rng, int m, int T, int N) {
    const auto ula = SteeringManifold::ula(m);
    const Grid g = Grid::uniform(ula.domain(), N);
    Instance in;
    in.A = steering_matrix(ula, g.list());
    in.X = oracle::random_matrix(m, T, rng);
    return in;
}

}  // namespace

TEST_CASE("single-atom dictionary has the shrinkage closed form") {
    const int m = 8;
    const auto ula = SteeringManifold::ula(m);
    const cplx s0(2.0, -1.0);
    const std::vector<double> pts{0.25};
    const CMat A = steering_matrix(ula, pts);
    const CMat X = A * s0;
    const double lam = 3.0;
    const auto sol = solve_group_lasso(X, A, lam);
    CHECK(std::abs(sol.S(0, 0) - s0 * (1.0 - lam / (m * std::abs(s0)))) < 1e-12);
    CHECK(kkt_check(sol.S, X, A, lam, 1e-9).passed);
    // Above lambda_max the solution is zero.
    const auto zero = solve_group_lasso(X, A, m * std::abs(s0) * 1.01);
    CHECK(zero.S.norm() == 0.0);
    CHECK(lambda_max(X, A) == Approx(m * std::abs(s0)));
}

TEST_CASE("lambda_max equals the largest dictionary correlation") {
    std::mt19937_64 rng(1);
    auto in = random_instance(rng, 6, 2, 40);
    double brute = 0;
    for (int i = 0; i < in.A.cols(); ++i) brute = std::max(brute, (in.A.col(i).adjoint() * in.X).norm());
    CHECK(lambda_max(in.X, in.A) == Approx(brute).epsilon(1e-14));
    CHECK(solve_group_lasso(in.X, in.A, brute * (1 + 1e-9)).support.empty());
    CHECK_FALSE(solve_group_lasso(in.X, in.A, brute * 0.99).support.empty());
}

TEST_CASE("objective matches an independent first-order solver") {
    std::mt19937_64 rng(2024);
    for (int k = 0; k < 6; ++k) {
        auto in = random_instance(rng, 5 + k, 1 + k % 3, 24 + 4 * k);
        const double lam = 0.2 * lambda_max(in.X, in.A);
        const auto sol = solve_group_lasso(in.X, in.A, lam);
        double gap = 0;
        const double ref = oracle::fista_group_lasso(in.X, in.A, lam, gap);
        CHECK(gap < 1e-9 * ref);
        CHECK(std::abs(sol.objective - ref) <= 1e-6 * ref);
        CHECK(sol.objective <= ref + 1e-9 * ref);
        CHECK(kkt_check(sol.S, in.X, in.A, lam, 1e-6).passed);
    }
}

TEST_CASE("objective history is non-increasing") {
    std::mt19937_64 rng(3);
    auto in = random_instance(rng, 10, 3, 120);
    const auto sol = solve_group_lasso(in.X, in.A, 0.05 * lambda_max(in.X, in.A));
    REQUIRE(sol.objective_history.size() >= 2);
    for (std::size_t i = 1; i < sol.objective_history.size(); ++i)
        CHECK(sol.objective_history[i] <= sol.objective_history[i - 1] * (1 + 1e-12));
}

TEST_CASE("kkt check rejects a perturbed solution") {
    std::mt19937_64 rng(5);
    auto in = random_instance(rng, 8, 2, 64);
    const double lam = 0.3 * lambda_max(in.X, in.A);
    const auto sol = solve_group_lasso(in.X, in.A, lam);
    REQUIRE(kkt_check(sol.S, in.X, in.A, lam, 1e-6).passed);
    REQUIRE_FALSE(sol.support.empty());
    CMat bad = sol.S;
    bad(sol.support[0], 0) += 0.01;
    CHECK_FALSE(kkt_check(bad, in.X, in.A, lam, 1e-6).passed);
}

TEST_CASE("degenerate optima are reduced to at most 2m - 1 atoms") {
    std::mt19937_64 rng(6);
    for (int k = 0; k < 5; ++k) {
        const int m = 4 + k, T = 1 + k % 3;
        auto in = random_instance(rng, m, T, 80);
        const double lam = 0.02 * lambda_max(in.X, in.A);
        const auto sol = solve_group_lasso(in.X, in.A, lam);
        CHECK(static_cast<int>(sol.support.size()) <= 2 * m - 1);
        CHECK(kkt_check(sol.S, in.X, in.A, lam, 1e-8).passed);
        double gap = 0;
        CHECK(sol.objective == Approx(oracle::fista_group_lasso(in.X, in.A, lam, gap)).epsilon(1e-9));
    }
}

TEST_CASE("snapshot rotations commute with the solution") {
    std::mt19937_64 rng(16);
    for (int k = 0; k < 5; ++k) {
        const int m = 6 + k, T = 2 + k % 3;
        auto in = random_instance(rng, m, T, 3 * m);
        const std::vector<double> th{-1.0, 0.5};
        in.X = steering_matrix(SteeringManifold::ula(m), th) * oracle::random_matrix(2, T, rng) + 0.1 * in.X;
        const double lam = 0.2 * lambda_max(in.X, in.A);
        const auto sol = solve_group_lasso(in.X, in.A, lam);
        const CMat Q = oracle::random_unitary(T, rng);
        const auto rot = solve_group_lasso(in.X * Q, in.A, lam);
        CHECK(rot.support == sol.support);
        CHECK((rot.S.rowwise().norm() - sol.S.rowwise().norm()).norm() <= 1e-9 * sol.S.norm());
        CHECK((rot.S - sol.S * Q).norm() <= 1e-9 * sol.S.norm());
    }
}

TEST_CASE("shrinkage grows with lambda") {
    std::mt19937_64 rng(7);
    auto in = random_instance(rng, 8, 2, 64);
    const double lmax = lambda_max(in.X, in.A);
    double prev_norm = INFINITY, prev_res = 0;
    for (double f : {0.05, 0.1, 0.2, 0.4, 0.8}) {
        const auto sol = solve_group_lasso(in.X, in.A, f * lmax);
        const double l1 = sol.S.rowwise().norm().sum();
        const double res = sol.residual.norm();
        CHECK(l1 <= prev_norm * (1 + 1e-9));
        CHECK(res >= prev_res * (1 - 1e-9));
        prev_norm = l1;
        prev_res = res;
    }
}

TEST_CASE("grid overload reports support positions") {
    const int m = 8;
    const auto ula = SteeringManifold::ula(m);
    const Grid g = Grid::uniform(ula.domain(), 64);
    const int idx = 17;
    const CMat X = ula.steering(g.points[idx]) * cplx(1.0, 1.0);
    const auto sol = solve_group_lasso(X, g, ula, 0.1);
    REQUIRE(sol.support == std::vector<int>{idx});
    CHECK(sol.support_thetas[0] == g.points[idx]);
    CHECK(kkt_check(sol, X, g, ula, 1e-8).passed);
}

TEST_CASE("basis pursuit recovers a single on-grid atom") {
    const int m = 10;
    const auto ula = SteeringManifold::ula(m);
    const Grid g = Grid::uniform(ula.domain(), 128);
    const CMat X = ula.steering(g.points[40]) * cplx(0.0, 2.0);
    const auto sol = solve_noiseless_bp(X, g, ula, 1e-6);
    const RVec gam = sol.S.rowwise().norm();
    Eigen::Index arg;
    gam.maxCoeff(&arg);
    CHECK(arg == 40);
    CHECK(gam[40] == Approx(2.0).epsilon(1e-4));
    CHECK(gam.sum() - gam[40] < 1e-4);
}

TEST_CASE("grid fineness of a uniform periodic grid") {
    const auto ula = SteeringManifold::ula(4);
    for (int N : {8, 64, 1000}) {
        const Grid g = Grid::uniform(ula.domain(), N);
        CHECK(grid_fineness(g, ula.domain()) == Approx(kPi / N));
    }
}
