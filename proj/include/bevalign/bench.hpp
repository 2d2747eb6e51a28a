#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace bevalign {

// Median wall time in milliseconds over `repetitions` calls (after one
// untimed warm-up).
double time_stage_ms(const std::function<void()>& stage, int repetitions);

struct KnnScalePoint {
    int n = 0;              // number of indexed pixels
    double kd_us = 0.0;     // per-query, KD-tree
    double brute_us = 0.0;  // per-query, brute-force scan
    double ratio = 0.0;     // kd / brute
};

// Per-query cost of KD-tree vs brute-force k-NN on seeded random pixel sets
// of the given sizes. The brute side is timed on `queries` sampled queries.
std::vector<KnnScalePoint> measure_knn_scaling(const std::vector<int>& sizes, int k, int queries,
                                               std::uint64_t seed);

}  // namespace bevalign
