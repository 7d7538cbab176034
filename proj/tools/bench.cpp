// Compares the serial reference path against the OpenMP path for the
// bootstrap kernels and checks that both produce identical bytes.

#include <cstdio>
#include <cstring>
#include <vector>

#include <omp.h>

#include "refcheck/metrics.hpp"
#include "refcheck/rng.hpp"

using namespace refcheck;
using metrics::Band;
using metrics::ScoredLabel;

namespace {

std::vector<ScoredLabel> synth_dataset(std::size_t n, double separation, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ScoredLabel> data;
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool grounded = i % 2 == 0;
        const double raw = rng.gaussian(grounded ? separation : 0.0, 1.0);
        data.push_back({1.0 / (1.0 + std::exp(-raw)), grounded ? Label::G : Label::H});
    }
    return data;
}

bool bands_identical(const Band& a, const Band& b) {
    return std::memcmp(a.mean.data(), b.mean.data(), a.mean.size() * sizeof(double)) == 0 &&
           std::memcmp(a.lo.data(), b.lo.data(), a.lo.size() * sizeof(double)) == 0 &&
           std::memcmp(a.hi.data(), b.hi.data(), a.hi.size() * sizeof(double)) == 0;
}

void bench_band(const char* name, const metrics::CurveStatistic& stat,
                const std::vector<ScoredLabel>& data, int replicates) {
    metrics::BootstrapOptions opts;
    opts.replicates = replicates;
    opts.seed = 99;

    opts.exec = Exec::serial;
    double t0 = omp_get_wtime();
    const Band serial = metrics::bootstrap_band(data, stat, opts);
    const double serial_s = omp_get_wtime() - t0;

    opts.exec = Exec::parallel;
    t0 = omp_get_wtime();
    const Band parallel = metrics::bootstrap_band(data, stat, opts);
    const double parallel_s = omp_get_wtime() - t0;

    std::printf("%-18s n=%-6zu R=%-4d serial %8.3fs  openmp %8.3fs  speedup %5.2fx  %s\n",
                name, data.size(), replicates, serial_s, parallel_s, serial_s / parallel_s,
                bands_identical(serial, parallel) ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t n = 4000;
    int replicates = 200;
    if (argc > 1) n = static_cast<std::size_t>(std::atoll(argv[1]));
    if (argc > 2) replicates = std::atoi(argv[2]);

    std::printf("threads: %d\n", omp_get_max_threads());
    const auto data = synth_dataset(n, 1.2, 7);

    bench_band("bootstrap-roc", metrics::roc_interpolation_statistic(), data, replicates);
    bench_band("bootstrap-fdr", metrics::fdr_interpolation_statistic(20), data, replicates);
    return 0;
}
