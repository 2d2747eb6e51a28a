#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevalign/camera.hpp"
#include "bevalign/tensor.hpp"

namespace bevalign {

// Axis-aligned box rotated by yaw about its center. Geometry is in world
// coordinates (ground plane at z = 0); a box resting on the ground has
// center.z = size.z / 2.
struct Box {
    Vec3 center;  // meters, world frame
    Vec3 size;    // (length, width, height), meters
    double yaw = 0.0;  // radians about +z
};

// Synthetic world: ground plane z = 0 plus boxes, observed by a surround rig
// whose LiDAR sits at (0, 0, sensor_height). All sensor-frame geometry (point
// clouds, extrinsics) is expressed in the LiDAR frame, i.e. world coordinates
// shifted down by sensor_height.
struct Scene {
    std::vector<Box> boxes;
    bool ground_plane = true;
    double sensor_height = 1.84;  // meters above ground
    double range = 54.0;          // |x|, |y| cap for hits, meters
    std::vector<CameraModel> rig;
    std::uint64_t seed = 0;

    void validate() const;
};

// First hit along (origin, dir) in the LiDAR frame, ignoring the range cap.
// Returns +inf when nothing is hit.
double ray_cast(const Scene& scene, const Vec3& origin, const Vec3& dir);

// Spins `rays` rays (32 elevation bands, seeded azimuth jitter) from the
// LiDAR origin and keeps first hits with |x|, |y| <= range.
PointCloud sample_lidar(const Scene& scene, int rays);

// Exact per-pixel camera-frame depth z_c of the nearest surface (1, 1, H, W);
// zero where no in-range surface is hit.
FeatureMap render_true_depth(const Scene& scene, const CameraModel& cam);

// Six cameras at 60 degree headings, f = 500 px, principal point centered.
std::vector<CameraModel> make_default_rig(int image_height = 256, int image_width = 704);

// Ground plane plus `num_boxes` seeded boxes scattered in a ring around the
// sensor, with the default rig attached.
Scene make_random_scene(std::uint64_t seed, int num_boxes, int image_height = 256,
                        int image_width = 704);

std::string scene_to_json(const Scene& scene, const std::string& rig_file);
// `rig` is resolved by the caller from the "rig_file" reference in the JSON.
Scene scene_from_json(const std::string& json_text, std::string* rig_file_out);
void save_scene(const std::string& path, const Scene& scene, const std::string& rig_file);
Scene load_scene(const std::string& path);

}  // namespace bevalign
