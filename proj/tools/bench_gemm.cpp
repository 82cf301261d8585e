#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include <CLI11.hpp>

#include "hmlab/kernels.hpp"

// Compares the serial reference kernels against the OpenMP versions on
// training-shaped problems and verifies the results are bit-identical.
using hmlab::kernels::gemm_nn_parallel;
using hmlab::kernels::gemm_nn_serial;
using hmlab::kernels::gemm_nt_parallel;
using hmlab::kernels::gemm_nt_serial;
using hmlab::kernels::gemm_tn_parallel;
using hmlab::kernels::gemm_tn_serial;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename Fn>
double time_best(Fn&& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bench_gemm: serial vs OpenMP kernel comparison"};
    int reps = 5;
    std::vector<int> sizes{64, 128, 256, 512};
    app.add_option("--reps", reps, "repetitions per measurement (best is kept)");
    app.add_option("--sizes", sizes, "square problem sizes to run");
    CLI11_PARSE(app, argc, argv);

    std::mt19937_64 rng(42);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);

    std::printf("%-8s %6s %12s %12s %8s %s\n", "kernel", "size", "serial MF/s",
                "openmp MF/s", "speedup", "bit-identical");
    bool all_identical = true;
    for (int n : sizes) {
        const int64_t m = n, k = n, nn = n;
        std::vector<float> A(static_cast<size_t>(m * k)), B(static_cast<size_t>(k * nn));
        for (auto& v : A) v = dist(rng);
        for (auto& v : B) v = dist(rng);
        std::vector<float> Cs(static_cast<size_t>(m * nn)), Cp(Cs.size());
        const double flops = 2.0 * double(m) * double(k) * double(nn);

        struct Form {
            const char* name;
            void (*serial)(const float*, const float*, float*, int64_t, int64_t, int64_t, bool);
            void (*parallel)(const float*, const float*, float*, int64_t, int64_t, int64_t,
                             bool);
        };
        const Form forms[] = {{"nn", gemm_nn_serial<float>, gemm_nn_parallel<float>},
                              {"tn", gemm_tn_serial<float>, gemm_tn_parallel<float>},
                              {"nt", gemm_nt_serial<float>, gemm_nt_parallel<float>}};
        for (const auto& f : forms) {
            const double ts =
                time_best([&] { f.serial(A.data(), B.data(), Cs.data(), m, k, nn, false); },
                          reps);
            const double tp =
                time_best([&] { f.parallel(A.data(), B.data(), Cp.data(), m, k, nn, false); },
                          reps);
            const bool same = Cs == Cp;
            all_identical = all_identical && same;
            std::printf("%-8s %6d %12.1f %12.1f %8.2f %s\n", f.name, n, flops / ts / 1e6,
                        flops / tp / 1e6, ts / tp, same ? "yes" : "NO");
        }
    }
    if (!all_identical) {
        std::printf("FAIL: parallel kernels are not bit-identical to serial\n");
        return 1;
    }
    return 0;
}
