#include "bevalign/bench.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_set>

#include "bevalign/kdtree.hpp"
#include "bevalign/rng.hpp"

namespace bevalign {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Distinct random pixels on a grid large enough to stay sparse.
std::vector<PixelCoord> random_pixels(int n, std::uint64_t seed) {
    const int extent = std::max(64, static_cast<int>(std::sqrt(static_cast<double>(n)) * 8));
    Rng rng(seed);
    std::unordered_set<std::int64_t> used;
    std::vector<PixelCoord> pixels;
    pixels.reserve(n);
    while (static_cast<int>(pixels.size()) < n) {
        const int u = static_cast<int>(rng.uniform_int(0, extent - 1));
        const int v = static_cast<int>(rng.uniform_int(0, extent - 1));
        if (used.insert(static_cast<std::int64_t>(v) * extent + u).second) {
            pixels.push_back({u, v});
        }
    }
    return pixels;
}

}  // namespace

double time_stage_ms(const std::function<void()>& stage, int repetitions) {
    stage();  // warm-up
    std::vector<double> times;
    times.reserve(repetitions);
    for (int i = 0; i < repetitions; ++i) {
        const auto start = Clock::now();
        stage();
        times.push_back(elapsed_ms(start));
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

std::vector<KnnScalePoint> measure_knn_scaling(const std::vector<int>& sizes, int k, int queries,
                                               std::uint64_t seed) {
    std::vector<KnnScalePoint> points;
    for (std::size_t si = 0; si < sizes.size(); ++si) {
        const int n = sizes[si];
        const auto pixels = random_pixels(n, seed + si);
        const PixelKdTree tree(pixels);
        const int q = std::min(queries, n);

        std::vector<int> found;
        volatile std::int64_t sink = 0;  // keep the loops from folding away

        auto kd_pass = [&] {
            for (int i = 0; i < q; ++i) {
                tree.knn(pixels[i], k, i, found);
                sink += found.empty() ? 0 : found[0];
            }
        };
        auto brute_pass = [&] {
            for (int i = 0; i < q; ++i) {
                const auto res = brute_force_knn(pixels, pixels[i], k, i);
                sink += res.empty() ? 0 : res[0];
            }
        };

        KnnScalePoint point;
        point.n = n;
        point.kd_us = time_stage_ms(kd_pass, 3) * 1000.0 / q;
        point.brute_us = time_stage_ms(brute_pass, 3) * 1000.0 / q;
        point.ratio = point.brute_us > 0.0 ? point.kd_us / point.brute_us : 0.0;
        points.push_back(point);
    }
    return points;
}

}  // namespace bevalign
