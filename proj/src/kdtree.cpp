#include "bevalign/kdtree.hpp"

#include <algorithm>

namespace bevalign {

namespace {

// Bounded candidate list, sorted ascending by NeighborKey. k stays small
// (tens), so linear insertion beats a heap here.
class ResultSet {
public:
    ResultSet(int k, std::vector<NeighborKey>& keys, std::vector<int>& indices)
        : k_(static_cast<std::size_t>(k)), keys_(keys), indices_(indices) {
        keys_.clear();
        indices_.clear();
    }

    bool full() const { return keys_.size() == k_; }
    std::int64_t worst_d2() const { return keys_.back().d2; }

    void add(const NeighborKey& key, int index) {
        if (full() && !(key < keys_.back())) return;
        std::size_t pos = keys_.size();
        while (pos > 0 && key < keys_[pos - 1]) --pos;
        if (full()) {
            keys_.pop_back();
            indices_.pop_back();
        }
        keys_.insert(keys_.begin() + pos, key);
        indices_.insert(indices_.begin() + pos, index);
    }

private:
    std::size_t k_;
    std::vector<NeighborKey>& keys_;
    std::vector<int>& indices_;
};

}  // namespace

PixelKdTree::PixelKdTree(const std::vector<PixelCoord>& points) {
    nodes_.reserve(points.size());
    points_ = &points;
    std::vector<int> order(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) order[i] = static_cast<int>(i);
    if (!order.empty()) {
        root_ = build(order, 0, static_cast<int>(order.size()), 0);
    }
    points_ = nullptr;
}

int PixelKdTree::build(std::vector<int>& order, int lo, int hi, int axis) {
    const int mid = lo + (hi - lo) / 2;
    const auto& pts = *points_;
    std::nth_element(order.begin() + lo, order.begin() + mid, order.begin() + hi,
                     [&pts, axis](int a, int b) {
                         if (pts[a][axis] != pts[b][axis]) return pts[a][axis] < pts[b][axis];
                         return pts[a][1 - axis] < pts[b][1 - axis];
                     });
    const int node_idx = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{pts[order[mid]], order[mid], -1, -1});
    const int next_axis = 1 - axis;
    if (lo < mid) {
        nodes_[node_idx].left = build(order, lo, mid, next_axis);
    }
    if (mid + 1 < hi) {
        nodes_[node_idx].right = build(order, mid + 1, hi, next_axis);
    }
    return node_idx;
}

void PixelKdTree::knn(const PixelCoord& query, int k, int exclude_index,
                      std::vector<int>& out) const {
    out.clear();
    if (k < 1 || nodes_.empty()) return;

    thread_local std::vector<NeighborKey> keys;
    ResultSet results(k, keys, out);

    // Explicit stack; descend the near side first and queue the far side with
    // its splitting-plane distance. A queued subtree is skipped at pop time if
    // the plane is strictly farther than the current worst candidate. Equal
    // distance must still be visited: the tie rule may prefer a point there.
    struct Frame {
        int node;
        int axis;
        std::int64_t plane_d2;
    };
    thread_local std::vector<Frame> pending;
    pending.clear();
    pending.push_back({root_, 0, 0});
    while (!pending.empty()) {
        const Frame frame = pending.back();
        pending.pop_back();
        if (results.full() && frame.plane_d2 > results.worst_d2()) continue;
        int node_idx = frame.node;
        int axis = frame.axis;
        while (node_idx >= 0) {
            const Node& node = nodes_[node_idx];
            if (node.index != exclude_index) {
                results.add(NeighborKey{pixel_dist2(query, node.pt), node.pt[1], node.pt[0]},
                            node.index);
            }
            const std::int64_t delta = query[axis] - node.pt[axis];
            const int near_child = delta < 0 ? node.left : node.right;
            const int far_child = delta < 0 ? node.right : node.left;
            if (far_child >= 0 &&
                (!results.full() || delta * delta <= results.worst_d2())) {
                pending.push_back({far_child, 1 - axis, delta * delta});
            }
            node_idx = near_child;
            axis = 1 - axis;
        }
    }
}

std::vector<int> PixelKdTree::knn(const PixelCoord& query, int k, int exclude_index) const {
    std::vector<int> out;
    knn(query, k, exclude_index, out);
    return out;
}

std::vector<int> brute_force_knn(const std::vector<PixelCoord>& points, const PixelCoord& query,
                                 int k, int exclude_index) {
    std::vector<std::pair<NeighborKey, int>> candidates;
    candidates.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (static_cast<int>(i) == exclude_index) continue;
        candidates.push_back(
            {NeighborKey{pixel_dist2(query, points[i]), points[i][1], points[i][0]},
             static_cast<int>(i)});
    }
    const std::size_t take = std::min<std::size_t>(k < 0 ? 0 : k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<int> out(take);
    for (std::size_t i = 0; i < take; ++i) out[i] = candidates[i].second;
    return out;
}

}  // namespace bevalign
