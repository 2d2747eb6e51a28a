#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevalign/camera.hpp"
#include "bevalign/kdtree.hpp"
#include "bevalign/tensor.hpp"

namespace bevalign {

// Projected depth for one camera image: a dense (1, 1, H, W) map that is zero
// at unoccupied pixels, plus the occupied coordinates sorted by (v, u) with
// their depths. Pixel collisions keep the minimum depth (nearest surface).
struct SparseDepth {
    FeatureMap depth;
    std::vector<PixelCoord> coords;  // (u, v), deduplicated, sorted by (v, u)
    std::vector<float> values;       // depth per coord, > 0

    std::size_t occupied() const { return coords.size(); }
};

SparseDepth build_sparse_depth(const PixelProjection& proj, int height, int width);

// Per occupied pixel, the k nearest other occupied pixels in NeighborKey
// order. Rows with fewer than k eligible neighbors repeat the farthest
// available one; a lone pixel repeats itself.
struct NeighborTable {
    int k = 0;
    std::vector<PixelCoord> neighbor_coords;  // occupied() * k, row-major

    const PixelCoord& neighbor(std::size_t pixel, int j) const {
        return neighbor_coords[pixel * k + j];
    }
};

NeighborTable knn_neighbors(const SparseDepth& sparse, int k);

// First `k` columns of a larger table. Equals knn_neighbors at k directly:
// nearest-neighbor lists under a total order are prefix-consistent, and the
// padding rule repeats a row element that the prefix also contains.
NeighborTable table_prefix(const NeighborTable& table, int k);

// Neighbor-depth map (1, k, H, W): channel j at an occupied pixel holds the
// depth stored at that pixel's j-th neighbor; zero elsewhere.
FeatureMap gather_neighbor_depth(const SparseDepth& sparse, const NeighborTable& table);

std::string neighbor_table_to_json(const SparseDepth& sparse, const NeighborTable& table);

// Two CBR stacks (projected-depth branch, neighbor-depth branch), each with
// total stride 8; outputs are channel-concatenated.
struct DualTransform {
    std::vector<CbrBlock> depth_branch;
    std::vector<CbrBlock> neighbor_branch;

    static DualTransform seeded(std::uint64_t seed, int k_graph, int out_channels);
};

FeatureMap dual_transform(const FeatureMap& d_s, const FeatureMap& d_k,
                          const DualTransform& blocks);

// Three CBR sets over concat(camera features, dual depth feature); the result
// splits along channels into depth logits and context.
struct DepthNet {
    std::vector<CbrBlock> blocks;
    int depth_channels = 0;    // leading channels: depth logits
    int context_channels = 0;  // trailing channels: image context

    static DepthNet seeded(std::uint64_t seed, int in_channels, int depth_channels,
                           int context_channels);
};

struct DepthNetOutput {
    FeatureMap depth_logits;
    FeatureMap context;
};

DepthNetOutput depthnet(const FeatureMap& f_cam, const FeatureMap& d_sk, const DepthNet& net);

// softmax(depth logits) x context, stored context-major: output channel
// c_ctx * n_bins + c_depth.
FeatureMap depth_context_product(const FeatureMap& depth_logits, const FeatureMap& context);

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

// Discretized camera frustum: depth bins x feature plane, with ego-frame
// coordinates precomputed through the inverse projection.
struct FrustumConfig {
    double depth_min = 1.0;
    double depth_max = 60.0;
    double depth_step = 0.5;
    int feature_stride = 8;
};

struct FrustumGrid {
    int bins = 0;
    int height = 0;  // feature plane
    int width = 0;
    std::vector<float> coords;  // (bin, y, x) -> (x, y, z) ego frame, flat

    std::size_t coord_index(int bin, int y, int x) const {
        return ((static_cast<std::size_t>(bin) * height + y) * width + x) * 3;
    }
};

FrustumGrid make_frustum(const CameraModel& cam, const FrustumConfig& config);

// BEV grid over the ego neighborhood. The reference voxelization the plane is
// derived from is recorded alongside for provenance.
struct BevGrid {
    double x_min = -54.0;
    double x_max = 54.0;
    double y_min = -54.0;
    double y_max = 54.0;
    double cell = 0.3;
    std::array<double, 3> voxel_size{0.075, 0.075, 0.2};
    std::array<double, 6> voxel_range{-54.0, -54.0, -5.0, 54.0, 54.0, 3.0};

    int size_x() const;
    int size_y() const;
    void validate() const;
    // Cell of an ego-frame (x, y); false when out of range.
    bool cell_of(double x, double y, int& ix, int& iy) const;
};

// Scatter-sum of lifted context features into BEV cells, iterating frustum
// cells in (bin, y, x) order. Out-of-range cells are dropped.
FeatureMap bev_pool(const FeatureMap& f_dc, const FrustumGrid& frustum, const BevGrid& bev,
                    int context_channels);

// Seeded pseudo-random stand-in for encoder output; when a depth render is
// supplied its downsampled, normalized copy is mixed in so the features
// correlate with scene geometry.
FeatureMap synth_camera_features(std::uint64_t seed, int channels, int height, int width,
                                 const FeatureMap* depth_hint = nullptr);

// Per-pixel depth errors at occupied pixels with nonzero ground truth:
// e_self uses the stored depth, e_best the minimum over self and the k
// neighbor depths. e_best <= e_self by construction.
struct DepthErrorSamples {
    std::vector<float> e_self;
    std::vector<float> e_best;  // paired with e_self
};

DepthErrorSamples depth_error_samples(const SparseDepth& sparse, const NeighborTable& table,
                                      const FeatureMap& truth);

struct DepthErrorMetrics {
    std::size_t evaluated = 0;
    double median_self = 0.0;
    double mean_self = 0.0;
    double median_best = 0.0;
    double mean_best = 0.0;
    double win_fraction = 0.0;  // share of pixels with e_best < e_self
};

DepthErrorMetrics summarize_depth_errors(const DepthErrorSamples& samples);

DepthErrorMetrics depth_error_report(const SparseDepth& sparse, const NeighborTable& table,
                                     const FeatureMap& truth);

}  // namespace bevalign
