#include "bevalign/camera.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bevalign/rng.hpp"

namespace bevalign {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
    const double n = norm();
    if (n == 0.0) {
        throw NumericalError("cannot normalize a zero vector");
    }
    return {x / n, y / n, z / n};
}

Mat3 Mat3::from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    Mat3 r;
    r.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
    return r;
}

Mat3 Mat3::axis_angle(const Vec3& axis, double angle_rad) {
    const Vec3 a = axis.normalized();
    const double c = std::cos(angle_rad);
    const double s = std::sin(angle_rad);
    const double t = 1.0 - c;
    Mat3 r;
    r.m = {t * a.x * a.x + c,       t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y,
           t * a.x * a.y + s * a.z, t * a.y * a.y + c,       t * a.y * a.z - s * a.x,
           t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c};
    return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += at(i, k) * o.at(k, j);
            r.at(i, j) = acc;
        }
    }
    return r;
}

Mat3 Mat3::transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
    return r;
}

double Mat3::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 Mat3::orthonormalized() const {
    Vec3 r0{m[0], m[1], m[2]};
    Vec3 r1{m[3], m[4], m[5]};
    r0 = r0.normalized();
    r1 = (r1 - r0 * r1.dot(r0)).normalized();
    const Vec3 r2 = r0.cross(r1);
    return from_rows(r0, r1, r2);
}

double rotation_angle(const Mat3& r) {
    const double c = std::min(1.0, std::max(-1.0, (r.trace() - 1.0) / 2.0));
    return std::acos(c);
}

void CameraModel::validate() const {
    if (fx <= 0.0 || fy <= 0.0) {
        throw ConfigError("CameraModel: focal lengths must be positive");
    }
    if (scale <= 0.0) {
        throw ConfigError("CameraModel: downsample scale must be positive");
    }
    if (height < 1 || width < 1) {
        throw ConfigError("CameraModel: image size must be >= 1");
    }
    const Mat3 rrt = rotation * rotation.transposed();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double expect = i == j ? 1.0 : 0.0;
            if (std::abs(rrt.at(i, j) - expect) > 1e-6) {
                throw ConfigError("CameraModel: rotation is not orthonormal");
            }
        }
    }
    if (std::abs(rotation.det() - 1.0) > 1e-6) {
        throw ConfigError("CameraModel: rotation determinant must be 1");
    }
}

PixelProjection project_points(const PointCloud& cloud, const CameraModel& cam) {
    PixelProjection proj;
    proj.points.resize(cloud.points.size());
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const Vec3 q = cam.rotation * cloud.points[i] + cam.translation;
        ProjectedPoint& p = proj.points[i];
        p.depth = q.z;
        if (q.z <= 0.0) {
            p.u = 0.0;
            p.v = 0.0;
            p.valid = false;
            continue;
        }
        p.u = cam.scale * (cam.fx * q.x / q.z + cam.cx);
        p.v = cam.scale * (cam.fy * q.y / q.z + cam.cy);
        const double ru = std::round(p.u);
        const double rv = std::round(p.v);
        p.valid = ru >= 0.0 && ru < cam.width && rv >= 0.0 && rv < cam.height;
    }
    return proj;
}

Vec3 backproject(const CameraModel& cam, double u, double v, double depth) {
    const double x = (u / cam.scale - cam.cx) / cam.fx * depth;
    const double y = (v / cam.scale - cam.cy) / cam.fy * depth;
    return cam.rotation.transposed() * (Vec3{x, y, depth} - cam.translation);
}

CameraModel perturb_extrinsics(const CameraModel& cam, const NoiseSpec& noise,
                               std::uint64_t seed) {
    noise.validate();
    Rng rng(seed);
    CameraModel out = cam;
    // Draw the axis/angle/translation unconditionally so the stream layout
    // does not depend on the noise magnitudes.
    const double z = 2.0 * rng.uniform() - 1.0;
    const double phi = 2.0 * M_PI * rng.uniform();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 axis{r * std::cos(phi), r * std::sin(phi), z};
    const double angle = rng.normal(0.0, noise.rot_deg * M_PI / 180.0);
    const Vec3 shift{rng.normal(0.0, noise.trans_m), rng.normal(0.0, noise.trans_m),
                     rng.normal(0.0, noise.trans_m)};
    if (noise.rot_deg > 0.0) {
        out.rotation = (Mat3::axis_angle(axis, angle) * cam.rotation).orthonormalized();
    }
    if (noise.trans_m > 0.0) {
        out.translation = cam.translation + shift;
    }
    return out;
}

namespace {

nlohmann::json camera_to_json(const CameraModel& cam) {
    nlohmann::json j;
    j["K"] = cam.k_matrix();
    j["R"] = cam.rotation.m;
    j["T"] = {cam.translation.x, cam.translation.y, cam.translation.z};
    j["h"] = cam.scale;
    j["H"] = cam.height;
    j["W"] = cam.width;
    return j;
}

CameraModel camera_from_json(const nlohmann::json& j) {
    CameraModel cam;
    const auto k = j.at("K").get<std::array<double, 9>>();
    cam.fx = k[0];
    cam.fy = k[4];
    cam.cx = k[2];
    cam.cy = k[5];
    cam.rotation.m = j.at("R").get<std::array<double, 9>>();
    const auto t = j.at("T").get<std::array<double, 3>>();
    cam.translation = {t[0], t[1], t[2]};
    cam.scale = j.at("h").get<double>();
    cam.height = j.at("H").get<int>();
    cam.width = j.at("W").get<int>();
    cam.validate();
    return cam;
}

}  // namespace

std::string rig_to_json(const std::vector<CameraModel>& rig) {
    nlohmann::json j;
    j["cameras"] = nlohmann::json::array();
    for (const auto& cam : rig) {
        j["cameras"].push_back(camera_to_json(cam));
    }
    return j.dump(2);
}

std::vector<CameraModel> rig_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("rig JSON parse error: ") + e.what());
    }
    std::vector<CameraModel> rig;
    try {
        for (const auto& c : j.at("cameras")) {
            rig.push_back(camera_from_json(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("rig JSON schema error: ") + e.what());
    }
    if (rig.empty()) {
        throw ConfigError("rig JSON contains no cameras");
    }
    return rig;
}

void save_rig(const std::string& path, const std::vector<CameraModel>& rig) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError(path + ": cannot open for writing");
    }
    out << rig_to_json(rig) << "\n";
    if (!out) {
        throw IoError(path + ": write failed");
    }
}

std::vector<CameraModel> load_rig(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path + ": cannot open rig file");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return rig_from_json(text);
}

}  // namespace bevalign
