#pragma once

#include <cstdint>
#include <string>

#include "bevalign/camera.hpp"
#include "bevalign/global_align.hpp"
#include "bevalign/local_align.hpp"

namespace bevalign {

// One config drives every CLI workflow; JSON round-trippable, CLI flags
// override individual fields.
struct RunConfig {
    std::uint64_t seed = 42;
    std::string rig_file;  // empty: built-in six-camera rig
    std::string out_dir = "out";

    NoiseSpec noise{1.0, 0.1, 4};
    int k_graph = 8;

    // Image size of the built-in rig (ignored when rig_file is set).
    int image_height = 256;
    int image_width = 704;

    // Channel widths (desk-scale defaults; configuration, not constants).
    int camera_channels = 64;   // synthetic camera feature width
    int context_channels = 80;  // image context split of the depth net
    int dual_channels = 32;     // dual depth encoding width
    int lidar_channels = 32;    // LiDAR BEV width

    FrustumConfig frustum;
    BevGrid bev;

    // Scene synthesis.
    int num_boxes = 12;
    int rays = 16384;
    int z_slabs = 8;  // voxel slabs over voxel_range z when rasterizing

    // Offset-recovery problem (BEV alignment runs on its own small grid).
    // The blur keeps the feature correlation length above the largest shift.
    int recover_grid = 64;
    int recover_channels = 12;
    int recover_blur_radius = 9;
    int recover_blur_passes = 6;
    OptimizeConfig optimizer;

    bool sweep_k = false;
    bool dump_neighbors = false;

    void validate() const;
};

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& json_text);
RunConfig load_config(const std::string& path);

}  // namespace bevalign
