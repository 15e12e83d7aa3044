// Serial reference vs OpenMP kernels on the scans that dominate run time.

#include "classdoa/consistency.hpp"
#include "classdoa/kernels.hpp"
#include "classdoa/performance.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>

using namespace classdoa;

namespace {

template <class F>
double best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        best = std::min(best, s);
    }
    return best;
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %8s %12s %12s %8s %s\n", "kernel", "size", "serial_ms", "parallel_ms", "speedup", "identical");
    for (int m : {16, 64, 256, 1024}) {
        const auto ula = SteeringManifold::ula(m);
        const CMat Z = draw_noise(m, 4, NoiseModel::white(1.0, 3), 0);
        const auto pts = scan_points(ula.domain(), kPi / (64.0 * m));
        RVec a, b;
        const double ts = best_of(5, [&] { a = dual_norms_serial(ula, Z, pts); });
        const double tp = best_of(5, [&] { b = dual_norms_parallel(ula, Z, pts); });
        std::printf("%-28s %8d %12.3f %12.3f %8.2f %s\n", "dual_norms", m, 1e3 * ts, 1e3 * tp, ts / tp,
                    a == b ? "yes" : "no");
    }

    std::mt19937_64 rng(5);
    const auto xi = random_xi_sampler(1)(rng);
    const AsymptoticTestFunction f(2.3 * kPi, xi);
    const auto dp = scan_points({-8.0 * kPi, 8.0 * kPi, false}, 8.0 * kPi / 4096.0);
    RVec a, b;
    const auto fn = [&](double x) { return f(x); };
    const double ts = best_of(5, [&] { a = evaluate_scan(fn, dp, Exec::serial); });
    const double tp = best_of(5, [&] { b = evaluate_scan(fn, dp, Exec::parallel); });
    std::printf("%-28s %8zu %12.3f %12.3f %8.2f %s\n", "asymptotic_test_scan", dp.size(), 1e3 * ts, 1e3 * tp,
                ts / tp, a == b ? "yes" : "no");

    const ThresholdOptions opts{.draws = 40};
    const double tt = best_of(1, [&] { resolution_threshold_search(random_xi_sampler(1), opts); });
    std::printf("%-28s %8d %12s %12.3f\n", "threshold_search", opts.draws, "-", 1e3 * tt);
    return 0;
}
