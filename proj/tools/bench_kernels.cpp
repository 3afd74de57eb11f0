// Micro-benchmark comparing the serial reference kernels against the
// OpenMP-parallel variants (conv2d and the forward projector).

#include <chrono>
#include <cstdio>

#include "xrgen/kernels.hpp"
#include "xrgen/phantom.hpp"
#include "xrgen/projector.hpp"
#include "xrgen/rng.hpp"

using namespace xrgen;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(int reps, auto&& fn) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_conv(int c, int hw, int reps) {
    Rng rng(1);
    std::vector<double> x(static_cast<std::size_t>(c) * hw * hw);
    std::vector<double> w(static_cast<std::size_t>(c) * c * 9), b(c);
    std::vector<double> y(x.size());
    for (auto& v : x) v = rng.normal();
    for (auto& v : w) v = rng.normal();

    const double serial = time_ms(reps, [&] {
        kernels::conv2d_forward(x.data(), c, hw, hw, w.data(), b.data(), c, 3, 1, y.data(),
                                ExecMode::Serial);
    });
    const double parallel = time_ms(reps, [&] {
        kernels::conv2d_forward(x.data(), c, hw, hw, w.data(), b.data(), c, 3, 1, y.data(),
                                ExecMode::Parallel);
    });
    std::printf("conv2d %2dch %3dx%-3d  serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", c,
                hw, hw, serial, parallel, serial / parallel);
}

void bench_projector(int grid, int reps) {
    phantom::PhantomParams params;
    params.grid = grid;
    params.seed = 3;
    const phantom::VolumeGrid vol = phantom::build_phantom(params);
    proj::ProjectionGeometry geom;
    geom.detector_h = geom.detector_w = grid;
    const double serial =
        time_ms(reps, [&] { proj::forward_project(vol, geom, 7, ExecMode::Serial); });
    const double parallel =
        time_ms(reps, [&] { proj::forward_project(vol, geom, 7, ExecMode::Parallel); });
    std::printf("projector %3d^3        serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n",
                grid, serial, parallel, serial / parallel);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", max_threads());
    bench_conv(16, 64, 20);
    bench_conv(32, 64, 10);
    bench_conv(64, 32, 10);
    bench_projector(64, 20);
    bench_projector(96, 10);
    return 0;
}
