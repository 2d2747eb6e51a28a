#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace bevalign {

using PixelCoord = std::array<int, 2>;  // (u, v)

// Total order used for every neighbor query in the library: ascending squared
// Euclidean distance, ties broken by (v, u) lexicographically. Integer
// arithmetic throughout, so comparisons are exact.
struct NeighborKey {
    std::int64_t d2;
    int v;
    int u;

    bool operator<(const NeighborKey& o) const {
        if (d2 != o.d2) return d2 < o.d2;
        if (v != o.v) return v < o.v;
        return u < o.u;
    }
};

inline std::int64_t pixel_dist2(const PixelCoord& a, const PixelCoord& b) {
    const std::int64_t du = a[0] - b[0];
    const std::int64_t dv = a[1] - b[1];
    return du * du + dv * dv;
}

// Static 2-D KD-tree over integer pixel coordinates. Median-split build in
// O(N log N); k-NN queries in O(log N) expected. Query results match a
// brute-force sort under NeighborKey exactly, including ties.
class PixelKdTree {
public:
    explicit PixelKdTree(const std::vector<PixelCoord>& points);

    std::size_t size() const { return nodes_.size(); }

    // Indices of the k nearest points to `query` (excluding `exclude_index`
    // when >= 0), ordered by NeighborKey. Returns fewer than k only when the
    // tree has fewer eligible points.
    void knn(const PixelCoord& query, int k, int exclude_index, std::vector<int>& out) const;
    std::vector<int> knn(const PixelCoord& query, int k, int exclude_index = -1) const;

private:
    struct Node {
        PixelCoord pt;
        int index;  // position in the input vector
        int left = -1;
        int right = -1;
    };

    int build(std::vector<int>& order, int lo, int hi, int axis);

    std::vector<Node> nodes_;
    int root_ = -1;
    const std::vector<PixelCoord>* points_ = nullptr;  // only valid during build
};

// O(N) reference used by tests and the scaling benchmark.
std::vector<int> brute_force_knn(const std::vector<PixelCoord>& points, const PixelCoord& query,
                                 int k, int exclude_index = -1);

}  // namespace bevalign
