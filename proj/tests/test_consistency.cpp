#include "classdoa/consistency.hpp"

#include "doctest.h"
#include "oracles.hpp"

using namespace classdoa;
using doctest::Approx;

namespace {

SparseRepresentation pair_at(int m, double sep) {
    SparseRepresentation r;
    r.thetas = RVec(2);
    r.thetas << -sep / 2, sep / 2;
    r.amplitudes = CMat::Ones(2, 1);
    return r;
}

}  // namespace

TEST_CASE("single source is consistent") {
    const int m = 15;
    const auto ula = SteeringManifold::ula(m);
    SparseRepresentation r;
    r.thetas = RVec::Constant(1, 0.8);
    r.amplitudes = CMat::Constant(1, 1, cplx(0.5, 2.0));
    const auto v = check_consistency(ula, r);
    CHECK(v.consistent);
    CHECK(v.worst_value == Approx(1.0).epsilon(1e-9));
    // Away from the source the bound is the normalized beam pattern.
    const ConsistencyFunction f(ula, build_expansion(ula, r));
    CHECK(f(0.8) == Approx(1.0).epsilon(1e-12));
    CHECK(f(2.0) == Approx(std::abs((ula.steering(2.0).adjoint() * ula.steering(0.8))(0, 0)) / m).epsilon(1e-12));
    CHECK(f(2.0) < 0.5);
}

TEST_CASE("two sources: consistent at twice the beamwidth, not at a quarter") {
    const int m = 15;
    const auto ula = SteeringManifold::ula(m);
    const auto good = check_consistency(ula, pair_at(m, 4 * kPi / m));
    CHECK(good.consistent);
    CHECK(good.worst_value == Approx(1.0).epsilon(1e-6));
    const auto bad = check_consistency(ula, pair_at(m, 0.5 * kPi / m));
    CHECK_FALSE(bad.consistent);
    CHECK(bad.margin < 0);
}

TEST_CASE("consistency function equals one on the support") {
    const int m = 12;
    const auto ula = SteeringManifold::ula(m);
    SparseRepresentation r = pair_at(m, 5 * kPi / m);
    r.amplitudes(1, 0) = cplx(0.3, -0.8);
    const ConsistencyFunction f(ula, build_expansion(ula, r));
    CHECK(f(r.thetas[0]) == Approx(1.0).epsilon(1e-9));
    CHECK(f(r.thetas[1]) == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("asymptotic kernels: limits, symmetry, derivatives") {
    const auto k0 = asymptotic_kernels(0.0);
    CHECK(std::abs(kernel_F(0.0) - 1.0) < 1e-15);
    CHECK(std::abs(kernel_F(1e-9) - 1.0) < 1e-9);
    CHECK(std::abs(kernel_G(0.0) - cplx(0, 0.5)) < 1e-15);
    CHECK(std::abs(kernel_H(0.0) - 1.0 / 3.0) < 1e-15);
    CHECK(std::abs(k0.H(0, 0) - 1.0 / 3.0) < 1e-15);
    CHECK(std::abs(asymptotic_kernels(2.0).H(1, 1) - 1.0 / 3.0) < 1e-15);
    for (double x : {-7.0, -0.3, 0.2, 0.49, 0.51, 1.7, 12.0}) {
        // Closed form, independent of the implementation's series branch.
        const cplx F = (std::exp(cplx(0, x)) - 1.0) / cplx(0, x);
        CHECK(std::abs(kernel_F(x) - F) < 1e-14);
        CHECK(std::abs(kernel_F(-x) - std::conj(kernel_F(x))) < 1e-15);
        const double h = 1e-5;
        const cplx dF = (kernel_F(x + h) - kernel_F(x - h)) / (2 * h);
        const cplx dG = (kernel_G(x + h) - kernel_G(x - h)) / (2 * h);
        CHECK(std::abs(kernel_G(x) - dF) < 1e-8);
        CHECK(std::abs(kernel_H(x) + dG) < 1e-8);
    }
}

TEST_CASE("asymptotic test: wide separation passes, narrow fails") {
    const auto sample = random_xi_sampler(1);
    std::mt19937_64 rng(5);
    bool any_fail = false;
    for (int k = 0; k < 10; ++k) {
        const Eigen::Matrix2cd Xi = sample(rng);
        CHECK(std::abs(Xi(0, 0) - 1.0) < 1e-15);
        CHECK(std::abs(Xi(1, 1) - 1.0) < 1e-15);
        CHECK(asymptotic_consistency_test(4 * kPi, Xi).passed);
        any_fail |= !asymptotic_consistency_test(0.5 * kPi, Xi).passed;
    }
    CHECK(any_fail);
}

TEST_CASE("asymptotic test is bracketed around the known threshold") {
    const auto sample = random_xi_sampler(1);
    std::mt19937_64 rng(1);
    bool all_pass_above = true, any_fail_below = false;
    for (int k = 0; k < 200; ++k) {
        const Eigen::Matrix2cd Xi = sample(rng);
        all_pass_above = all_pass_above && asymptotic_consistency_test(2.4 * kPi, Xi).passed;
        any_fail_below = any_fail_below || !asymptotic_consistency_test(2.1 * kPi, Xi).passed;
    }
    CHECK(all_pass_above);
    CHECK(any_fail_below);
}

TEST_CASE("threshold for the identity correlation is a fixed regression value") {
    ThresholdOptions opt;
    opt.draws = 1;
    const auto res = resolution_threshold_search([](std::mt19937_64&) { return Eigen::Matrix2cd::Identity().eval(); }, opt);
    CHECK(res.monotone);
    CHECK(res.delta / kPi == Approx(1.298950195312).epsilon(1e-9));
}

TEST_CASE("finite arrays agree with the asymptotic verdict") {
    Eigen::Matrix2cd Xi = Eigen::Matrix2cd::Ones();
    for (double delta : {1.5 * kPi, 3.0 * kPi}) {
        const bool asym = asymptotic_consistency_test(delta, Xi).passed;
        for (int m : {256, 1024}) {
            const auto v = check_consistency(SteeringManifold::ula(m), pair_at(m, delta / m));
            CHECK(v.consistent == asym);
        }
    }
}
