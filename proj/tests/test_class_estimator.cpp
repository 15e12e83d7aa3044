#include "classdoa/class_estimator.hpp"
#include "classdoa/performance.hpp"
#include "classdoa/perturbation.hpp"

#include "doctest.h"
#include "oracles.hpp"

using namespace classdoa;
using doctest::Approx;

namespace {

SparseRepresentation two_sources(int m) {
    SparseRepresentation r;
    r.thetas = RVec(2);
    r.thetas << -2 * kPi / m, 2 * kPi / m;
    r.amplitudes = CMat::Ones(2, 1);
    return r;
}

double dual_max(const SteeringManifold& manifold, const CMat& X) {
    return dual_peak(manifold, X, kPi / (256.0 * manifold.size())).value;
}

}  // namespace

TEST_CASE("noiseless off-grid source is recovered exactly") {
    const int m = 10;
    const auto ula = SteeringManifold::ula(m);
    const double t1 = 0.123456789;
    const CMat X = ula.steering(t1) * cplx(1.5, 0.5);
    const auto sol = solve_class(X, ula, 1e-3 * dual_max(ula, X));
    REQUIRE(sol.representation.order() == 1);
    CHECK(std::abs(sol.representation.thetas[0] - t1) < 1e-6);
    CHECK(sol.certificate.passed);
}

TEST_CASE("two sources at twice the beamwidth, small noise") {
    const int m = 15;
    const auto ula = SteeringManifold::ula(m);
    const auto truth = two_sources(m);
    const auto exp = build_expansion(ula, truth);
    const double sigma = 1e-3;
    const auto obs = generate_observation(ula, truth, NoiseModel::white(sigma, 77), 1, 3);
    const CMat N = obs.X - steering_matrix(ula, truth.theta_list()) * truth.amplitudes;
    const double lam = 1.01 * optimal_lambda_exact(exp, ula, N);
    const auto sol = solve_class(obs.X, ula, lam);
    REQUIRE(sol.representation.order() == 2);
    // Predicted spread of the noise term: sigma^2/2 Gamma^-1 R^-1 Gamma^-1.
    const RMat Rinv = exp.R.inverse();
    for (int i = 0; i < 2; ++i) {
        const double sd = sigma * std::sqrt(0.5 * Rinv(i, i)) / exp.gammas[i];
        const double err = sol.representation.thetas[i] - truth.thetas[i] - lam * exp.beta[i];
        CHECK(std::abs(err) < 3 * sd);
    }
}

TEST_CASE("lambda above the dual maximum gives the empty estimate") {
    const auto ula = SteeringManifold::ula(8);
    std::mt19937_64 rng(1);
    const CMat X = oracle::random_matrix(8, 2, rng);
    const double lmax = dual_max(ula, X);
    const auto sol = solve_class(X, ula, lmax * 1.001);
    CHECK(sol.representation.order() == 0);
    CHECK(sol.certificate.passed);
    CHECK(verify_class_optimality(SparseRepresentation::empty(2), lmax * 1.001, X, ula, 1e-8).passed);
}

TEST_CASE("solutions self-certify on random scenarios") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> md(4, 12), td(1, 3);
    std::uniform_real_distribution<double> frac(0.02, 0.6);
    for (int k = 0; k < 30; ++k) {
        const int m = md(rng), T = td(rng);
        const auto ula = SteeringManifold::ula(m);
        const CMat X = oracle::random_matrix(m, T, rng);
        const double lam = frac(rng) * dual_max(ula, X);
        const auto sol = solve_class(X, ula, lam);
        CHECK(sol.certificate.passed);
        if (!sol.non_unique) CHECK(sol.representation.order() <= m - 1);
        CHECK(sol.representation.irreducible());
        const auto again = verify_class_optimality(sol, X, ula, 1e-6);
        CHECK(again.passed);
        CHECK(sol.objective == Approx(class_objective(X, ula, sol.representation, lam)));
    }
}

TEST_CASE("flat dual functions are flagged as non-unique") {
    // Residual lambda * e_0 has |a^H N| = lambda for every angle.
    const int m = 6;
    const auto ula = SteeringManifold::ula(m);
    const double lam = 0.5;
    CVec y = CVec::Zero(m);
    for (double t : {-2.0, -0.9, 0.3, 1.1, 2.0, 2.9}) y += 0.7 * ula.steering(t);
    CVec e0 = CVec::Zero(m);
    e0[0] = lam;
    const CMat X = y + e0;
    const auto sol = solve_class(X, ula, lam);
    CHECK(sol.certificate.passed);
    CHECK(sol.objective == Approx(0.5 * lam * lam + lam * 0.7 * 6).epsilon(1e-8));
    CHECK(sol.non_unique);
}

TEST_CASE("unshrunk truth fails the alignment condition") {
    const int m = 12;
    const auto ula = SteeringManifold::ula(m);
    const auto truth = two_sources(m);
    const CMat X = steering_matrix(ula, truth.theta_list()) * truth.amplitudes;
    const auto cert = verify_class_optimality(truth, 0.1, X, ula, 1e-8);
    CHECK_FALSE(cert.passed);
    CHECK(cert.alignment_error > 0.05);
}

TEST_CASE("planar array estimates certify") {
    std::vector<Sensor> circle;
    for (int i = 0; i < 8; ++i) circle.push_back({0.6, 2 * kPi * i / 8});
    const auto arr = SteeringManifold::planar(circle);
    std::vector<double> th{0.8, 2.0};
    const CMat X = steering_matrix(arr, th) * CMat::Ones(2, 1);
    const auto sol = solve_class(X, arr, 0.1 * dual_max(arr, X));
    CHECK(sol.certificate.passed);
    REQUIRE(sol.representation.order() == 2);
    CHECK(sol.representation.thetas[0] == Approx(0.8).epsilon(1e-2));
    CHECK(sol.representation.thetas[1] == Approx(2.0).epsilon(1e-2));
}

TEST_CASE("snapshot rotation leaves the support unchanged") {
    std::mt19937_64 rng(12);
    for (int k = 0; k < 5; ++k) {
        const int m = 6 + k, T = 2 + k % 2;
        const auto ula = SteeringManifold::ula(m);
        const std::vector<double> th{-1.1, 0.2, 1.9};
        const CMat X = steering_matrix(ula, th) * oracle::random_matrix(3, T, rng) + 0.2 * oracle::random_matrix(m, T, rng);
        const double lam = 0.2 * dual_max(ula, X);
        const auto a = solve_class(X, ula, lam);
        const auto b = solve_class(X * oracle::random_unitary(T, rng), ula, lam);
        REQUIRE(a.representation.order() == b.representation.order());
        CHECK((a.representation.thetas - b.representation.thetas).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("small lambda changes move the estimate proportionally") {
    const int m = 15;
    const auto ula = SteeringManifold::ula(m);
    const auto truth = two_sources(m);
    const auto obs = generate_observation(ula, truth, NoiseModel::white(1e-3, 5), 1);
    const double lam = 0.02;
    const auto a = solve_class(obs.X, ula, lam);
    const auto b = solve_class(obs.X, ula, lam * (1 + 1e-3));
    const auto c = solve_class(obs.X, ula, lam * (1 + 2e-3));
    REQUIRE(a.representation.order() == 2);
    const double d1 = set_distance(a.representation.theta_list(), b.representation.theta_list());
    const double d2 = set_distance(a.representation.theta_list(), c.representation.theta_list());
    CHECK(d1 > 0);
    CHECK(d2 / d1 == Approx(2.0).epsilon(0.01));
}

TEST_CASE("crosschecked solve agrees with itself on a proper manifold") {
    const auto ula = SteeringManifold::ula(9);
    std::mt19937_64 rng(21);
    const CMat X = oracle::random_matrix(9, 2, rng);
    const auto sol = solve_class_crosschecked(X, ula, 0.3 * dual_max(ula, X));
    CHECK_FALSE(sol.non_unique);
    CHECK(sol.certificate.passed);
}

TEST_CASE("reduce_representation") {
    SparseRepresentation r;
    r.thetas = RVec::LinSpaced(3, 0.0, 1.0);
    r.amplitudes = CMat::Ones(3, 2);
    r.amplitudes.row(1).setZero();
    const auto a = reduce_representation(r, 0.0);
    CHECK(a.order() == 2);
    CHECK(a.thetas[1] == 1.0);
    const auto b = reduce_representation(a, 0.0);
    CHECK(b.thetas == a.thetas);
    CHECK(b.amplitudes == a.amplitudes);
    r.amplitudes.setZero();
    CHECK(reduce_representation(r, 0.0).order() == 0);
}

TEST_CASE("set distance") {
    const std::vector<double> A{0.3, 1.7}, one{1.0}, onefive{1.0, 5.0}, zt{0.0, 2.0}, none;
    CHECK(set_distance(A, A) == 0.0);
    CHECK(set_distance(one, onefive) == 0.0);
    CHECK(set_distance(onefive, one) == 4.0);
    CHECK(set_distance(zt, one) == 1.0);
    CHECK(set_distance(none, one) == 0.0);
    CHECK(std::isinf(set_distance(one, none)));
}

TEST_CASE("grid fineness") {
    const Interval closed{0.0, kPi, false};
    const auto pts = scan_points(closed, 0.05);
    CHECK(grid_fineness(Grid::from(pts), closed) == Approx((pts[1] - pts[0]) / 2));
    CHECK(grid_fineness(Grid::from({kPi / 2}), closed) == Approx(kPi / 2));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, kPi);
    std::vector<double> g(20);
    for (auto& x : g) x = u(rng);
    std::sort(g.begin(), g.end());
    const double z = grid_fineness(Grid::from(g), closed);
    const double brute = oracle::brute_max(
        [&](double t) {
            double best = INFINITY;
            for (double p : g) best = std::min(best, std::abs(t - p));
            return best;
        },
        0.0, kPi, 1000000);
    CHECK(z >= brute);
    CHECK(z - brute < 1e-5);
}
