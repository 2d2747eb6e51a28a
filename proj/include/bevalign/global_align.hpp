#pragma once

#include <cstdint>
#include <vector>

#include "bevalign/camera.hpp"
#include "bevalign/local_align.hpp"
#include "bevalign/tensor.hpp"

namespace bevalign {

// (B, C, Z, H, W) voxel feature; in this library a rasterized point
// density/occupancy grid stands in for a learned LiDAR encoding.
struct VoxelFeature {
    int batch = 0;
    int channels = 0;
    int depth = 0;  // Z slabs
    int height = 0;
    int width = 0;
    std::vector<float> data;

    VoxelFeature() = default;
    VoxelFeature(int b, int c, int z, int h, int w);

    std::size_t index(int b, int c, int z, int y, int x) const {
        return (((static_cast<std::size_t>(b) * channels + c) * depth + z) * height + y) * width +
               x;
    }
    float& at(int b, int c, int z, int y, int x) { return data[index(b, c, z, y, x)]; }
    float at(int b, int c, int z, int y, int x) const { return data[index(b, c, z, y, x)]; }
};

// Point density per (z slab, BEV cell), z spanning [z_min, z_max].
VoxelFeature rasterize_points(const PointCloud& cloud, const BevGrid& bev, int z_slabs,
                              double z_min, double z_max);

// Sum over the Z axis: (B, C, Z, H, W) -> (B, C, H, W).
FeatureMap flatten_lidar_bev(const VoxelFeature& voxels);
// Same, validating the spatial extent against a BEV grid.
FeatureMap flatten_lidar_bev(const VoxelFeature& voxels, const BevGrid& bev);

// Channel-concat of (LiDAR, camera) BEV features plus the fused supervision
// target produced by one CBR over the concat.
struct FusedBev {
    FeatureMap fused;   // (B, C_l + C_c, H, W), LiDAR block first
    FeatureMap target;  // (B, C_l, H, W), frozen supervision signal
    int lidar_channels = 0;
    int camera_channels = 0;

    FeatureMap camera_block() const;
    FeatureMap lidar_block() const;
};

FusedBev fuse_bev(const FeatureMap& f_l, const FeatureMap& f_c, const CbrBlock& fuse_block);

struct BevShift {
    int du = 0;  // cells along width
    int dv = 0;  // cells along height
};

struct NoisyBev {
    FeatureMap map;  // fused feature with the camera block translated
    BevShift shift;  // the drawn shift, recorded for evaluation
};

// Translates the camera channel block of the fused feature by an integer
// shift drawn uniformly from [-bev_shift_max, bev_shift_max]^2 (zero-filled
// at exposed edges). LiDAR channels are untouched.
NoisyBev inject_bev_noise(const FusedBev& fused, const NoiseSpec& noise, std::uint64_t seed);

// Integer/fractional translation helper used by the noise model and tests:
// out(y, x) = in(y - dv, x - du), zero outside.
FeatureMap translate_map(const FeatureMap& input, int du, int dv);

// Deform weights = grid_sample(f_l, offsets); output = cbr(weights * f_l).
// The noisy fused feature is accepted for interface parity and shape checks;
// the deform path itself reads only the LiDAR feature (the alignment
// mechanism compensates through the LiDAR pathway).
FeatureMap mm_align_forward(const FeatureMap& f_n, const FeatureMap& f_l,
                            const FeatureMap& offsets, const CbrBlock& align_block);

struct OptimizeConfig {
    double learning_rate = 0.1;
    int iterations = 300;
    double offset_clamp = 8.0;  // cells
    int max_halvings = 10;
    int stall_patience = 50;  // iterations without a decrease
};

struct IterationStat {
    int iter = 0;
    double loss = 0.0;
    double mean_abs_du = 0.0;
    double mean_abs_dv = 0.0;
};

struct OptimizeResult {
    FeatureMap offsets;  // best-so-far (B, 2, H, W)
    std::vector<IterationStat> curve;
    double final_loss = 0.0;
    bool stalled = false;
};

// Gradient descent on a per-cell offset field (initialized to zero)
// minimizing mse(cbr(grid_sample(warped, offsets) * modulator), target).
// Steps that would increase the loss are halved up to max_halvings times;
// stall_patience iterations without a decrease end the run early.
OptimizeResult optimize_alignment(const FeatureMap& warped, const FeatureMap& modulator,
                                  const CbrBlock& align_block, const FeatureMap& target,
                                  const OptimizeConfig& config);

// The mm_align_forward objective: the LiDAR feature is both the warped
// operand and the modulator.
OptimizeResult optimize_offsets(const FeatureMap& f_n, const FeatureMap& f_l,
                                const CbrBlock& align_block, const FeatureMap& target,
                                const OptimizeConfig& config);

// Training-time noise passes through verbatim; evaluation gets zero noise.
struct NoiseSchedule {
    NoiseSpec train_noise;

    NoiseSpec at(double epoch_fraction, bool training) const;
};

// One complete BEV-alignment recovery run on synthetic features: build clean
// LiDAR/camera BEV fields, fuse them, inject the seeded camera-block shift,
// then optimize an offset field that warps the displaced camera block back
// onto the clean reference (modulated by the LiDAR feature and pushed through
// the alignment CBR). The recovered shift is the interior mean of the field.
struct RecoveryArtifacts {
    FeatureMap lidar_bev;    // clean LiDAR BEV feature
    FeatureMap camera_bev;   // clean camera BEV feature
    FusedBev fused;          // concat + frozen fused supervision target
    NoisyBev noisy;          // camera block translated by the recorded shift
    FeatureMap align_target; // alignment forward at zero noise, zero offsets
    OptimizeResult optimization;
    FeatureMap deform_bev;   // mm_align_forward under the recovered offsets
    double recovered_du = 0.0;
    double recovered_dv = 0.0;
    int interior_margin = 0;  // cells excluded from the recovered-mean estimate
};

RecoveryArtifacts run_bev_recovery(std::uint64_t seed, int grid, int channels, int blur_radius,
                                   int blur_passes, const NoiseSpec& noise,
                                   const OptimizeConfig& config);

}  // namespace bevalign
