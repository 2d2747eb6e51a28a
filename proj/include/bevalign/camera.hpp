#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bevalign/common.hpp"

namespace bevalign {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const;
    Vec3 normalized() const;
};

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }
    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2);
    // Rodrigues rotation about a unit axis.
    static Mat3 axis_angle(const Vec3& axis, double angle_rad);

    double at(int r, int c) const { return m[r * 3 + c]; }
    double& at(int r, int c) { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const;
    Mat3 operator*(const Mat3& o) const;
    Mat3 transposed() const;
    double det() const;
    double trace() const { return m[0] + m[4] + m[8]; }

    // Gram-Schmidt on rows; keeps the result a proper rotation.
    Mat3 orthonormalized() const;
};

// Rotation angle of R in radians, from the trace.
double rotation_angle(const Mat3& r);

// Pinhole camera with rigid LiDAR->camera extrinsics and a downsample scale
// applied to the pixel result. Zero skew; z_c is true camera-frame depth.
struct CameraModel {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation;     // LiDAR -> camera
    Vec3 translation;  // meters
    double scale = 1.0;  // downsample factor h, multiplies (u, v)
    int height = 0;    // image size at scale h
    int width = 0;

    void validate() const;
    std::array<double, 9> k_matrix() const {
        return {fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0};
    }
    // Camera center in the LiDAR frame.
    Vec3 center() const { return rotation.transposed() * (translation * -1.0); }
};

struct PointCloud {
    std::vector<Vec3> points;  // LiDAR frame, meters
};

struct ProjectedPoint {
    double u = 0.0;  // continuous pixels at scale h
    double v = 0.0;
    double depth = 0.0;  // z_c, meters
    bool valid = false;
};

struct PixelProjection {
    std::vector<ProjectedPoint> points;
};

struct NoiseSpec {
    double rot_deg = 0.0;     // stddev of the random rotation angle
    double trans_m = 0.0;     // per-axis stddev of the translation shift
    int bev_shift_max = 0;    // max |shift| of the BEV camera block, cells

    void validate() const {
        if (rot_deg < 0.0 || trans_m < 0.0 || bev_shift_max < 0) {
            throw ConfigError("NoiseSpec: magnitudes must be >= 0");
        }
    }
};

// q = R p + T; (u, v) = h (fx qx/zc + cx, fy qy/zc + cy); valid iff z_c > 0
// and the rounded pixel is inside the image. Rounding is half-away-from-zero.
PixelProjection project_points(const PointCloud& cloud, const CameraModel& cam);

// Inverse of project_points for a valid sample: lifts (u, v, z_c) back to the
// LiDAR frame.
Vec3 backproject(const CameraModel& cam, double u, double v, double depth);

// Composes R with a random rotation (axis uniform on the sphere, angle ~
// Normal(0, rot_deg)) and shifts T by Normal(0, trans_m) per axis.
// Deterministic given seed; the result is re-orthonormalized.
CameraModel perturb_extrinsics(const CameraModel& cam, const NoiseSpec& noise,
                               std::uint64_t seed);

// Rig JSON: {"cameras": [{"K": [9], "R": [9], "T": [3], "h": f, "H": i, "W": i}]}
std::string rig_to_json(const std::vector<CameraModel>& rig);
std::vector<CameraModel> rig_from_json(const std::string& json_text);
void save_rig(const std::string& path, const std::vector<CameraModel>& rig);
std::vector<CameraModel> load_rig(const std::string& path);

}  // namespace bevalign
