#include "bevalign/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "bevalign/rng.hpp"

namespace bevalign {

namespace {

constexpr double kHitEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Slab test in the box's local frame; earliest positive t, or the exit face
// when the origin is inside.
double ray_box(const Box& box, double sensor_height, const Vec3& origin, const Vec3& dir) {
    const double c = std::cos(-box.yaw);
    const double s = std::sin(-box.yaw);
    const Vec3 center_lidar{box.center.x, box.center.y, box.center.z - sensor_height};
    const Vec3 po = origin - center_lidar;
    const Vec3 o{c * po.x - s * po.y, s * po.x + c * po.y, po.z};
    const Vec3 d{c * dir.x - s * dir.y, s * dir.x + c * dir.y, dir.z};

    double t_near = -kInf;
    double t_far = kInf;
    const double half[3] = {box.size.x / 2.0, box.size.y / 2.0, box.size.z / 2.0};
    const double oc[3] = {o.x, o.y, o.z};
    const double dc[3] = {d.x, d.y, d.z};
    for (int axis = 0; axis < 3; ++axis) {
        if (dc[axis] == 0.0) {
            if (oc[axis] < -half[axis] || oc[axis] > half[axis]) return kInf;
            continue;
        }
        double t0 = (-half[axis] - oc[axis]) / dc[axis];
        double t1 = (half[axis] - oc[axis]) / dc[axis];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far) return kInf;
    }
    if (t_far < kHitEps) return kInf;
    return t_near > kHitEps ? t_near : t_far;
}

double ray_ground(const Scene& scene, const Vec3& origin, const Vec3& dir) {
    if (!scene.ground_plane || dir.z == 0.0) return kInf;
    const double t = (-scene.sensor_height - origin.z) / dir.z;
    return t > kHitEps ? t : kInf;
}

bool hit_in_range(const Scene& scene, const Vec3& p) {
    return std::abs(p.x) <= scene.range && std::abs(p.y) <= scene.range;
}

}  // namespace

void Scene::validate() const {
    for (const auto& box : boxes) {
        if (box.size.x <= 0.0 || box.size.y <= 0.0 || box.size.z <= 0.0) {
            throw ConfigError("Scene: box sizes must be positive");
        }
    }
    if (rig.empty()) {
        throw ConfigError("Scene: rig must contain at least one camera");
    }
    if (range <= 0.0) {
        throw ConfigError("Scene: range must be positive");
    }
}

double ray_cast(const Scene& scene, const Vec3& origin, const Vec3& dir) {
    double best = ray_ground(scene, origin, dir);
    for (const auto& box : scene.boxes) {
        best = std::min(best, ray_box(box, scene.sensor_height, origin, dir));
    }
    return best;
}

PointCloud sample_lidar(const Scene& scene, int rays) {
    if (rays < 1) {
        throw ConfigError("sample_lidar: rays must be >= 1");
    }
    constexpr int kBands = 32;  // 32-beam sensor
    constexpr double kElevLoDeg = -30.67;
    constexpr double kElevHiDeg = 10.67;
    const int per_band = std::max(1, rays / kBands);

    Rng rng(scene.seed);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(per_band) * kBands);
    const Vec3 origin{0.0, 0.0, 0.0};
    for (int band = 0; band < kBands; ++band) {
        const double elev_deg =
            kElevLoDeg + (kElevHiDeg - kElevLoDeg) * band / static_cast<double>(kBands - 1);
        const double elev = elev_deg * M_PI / 180.0;
        const double cos_e = std::cos(elev);
        const double sin_e = std::sin(elev);
        const double jitter = rng.uniform();  // fraction of one azimuth step
        for (int j = 0; j < per_band; ++j) {
            const double az = 2.0 * M_PI * (j + jitter) / per_band;
            const Vec3 dir{cos_e * std::cos(az), cos_e * std::sin(az), sin_e};
            const double t = ray_cast(scene, origin, dir);
            if (!std::isfinite(t)) continue;
            const Vec3 hit = origin + dir * t;
            if (hit_in_range(scene, hit)) {
                cloud.points.push_back(hit);
            }
        }
    }
    return cloud;
}

FeatureMap render_true_depth(const Scene& scene, const CameraModel& cam) {
    cam.validate();
    FeatureMap depth(1, 1, cam.height, cam.width);
    const Mat3 rot_t = cam.rotation.transposed();
    const Vec3 origin = cam.center();
    for (int iy = 0; iy < cam.height; ++iy) {
        for (int ix = 0; ix < cam.width; ++ix) {
            // Pixel centers sit at integer (u, v); invert the projection with
            // unit camera-frame z so the ray parameter equals z_c directly.
            const Vec3 dir_cam{(ix / cam.scale - cam.cx) / cam.fx,
                               (iy / cam.scale - cam.cy) / cam.fy, 1.0};
            const Vec3 dir = rot_t * dir_cam;
            const double t = ray_cast(scene, origin, dir);
            if (!std::isfinite(t)) continue;
            if (hit_in_range(scene, origin + dir * t)) {
                depth.at(0, 0, iy, ix) = static_cast<float>(t);
            }
        }
    }
    return depth;
}

std::vector<CameraModel> make_default_rig(int image_height, int image_width) {
    std::vector<CameraModel> rig;
    constexpr int kCameras = 6;
    constexpr double kRadius = 0.8;    // mount offset from the LiDAR, meters
    constexpr double kZOffset = -0.3;  // below the LiDAR, meters
    for (int i = 0; i < kCameras; ++i) {
        const double heading = 2.0 * M_PI * i / kCameras;
        const double ch = std::cos(heading);
        const double sh = std::sin(heading);
        const Vec3 forward{ch, sh, 0.0};
        const Vec3 right{sh, -ch, 0.0};
        const Vec3 down{0.0, 0.0, -1.0};
        CameraModel cam;
        cam.fx = 500.0;
        cam.fy = 500.0;
        cam.cx = image_width / 2.0;
        cam.cy = image_height / 2.0;
        cam.width = image_width;
        cam.height = image_height;
        cam.scale = 1.0;
        cam.rotation = Mat3::from_rows(right, down, forward);
        const Vec3 position{kRadius * ch, kRadius * sh, kZOffset};
        cam.translation = cam.rotation * position * -1.0;
        cam.validate();
        rig.push_back(cam);
    }
    return rig;
}

Scene make_random_scene(std::uint64_t seed, int num_boxes, int image_height, int image_width) {
    Scene scene;
    scene.seed = seed;
    scene.rig = make_default_rig(image_height, image_width);
    Rng rng(Rng(seed).fork(0x5ce7e));
    for (int i = 0; i < num_boxes; ++i) {
        Box box;
        const double radius = rng.uniform(6.0, 45.0);
        const double azimuth = rng.uniform(0.0, 2.0 * M_PI);
        box.size = {rng.uniform(2.0, 8.0), rng.uniform(1.5, 3.0), rng.uniform(1.4, 3.5)};
        box.center = {radius * std::cos(azimuth), radius * std::sin(azimuth), box.size.z / 2.0};
        box.yaw = rng.uniform(0.0, 2.0 * M_PI);
        scene.boxes.push_back(box);
    }
    return scene;
}

std::string scene_to_json(const Scene& scene, const std::string& rig_file) {
    nlohmann::json j;
    j["seed"] = scene.seed;
    j["sensor_height"] = scene.sensor_height;
    j["range"] = scene.range;
    j["ground_plane"] = scene.ground_plane;
    j["rig_file"] = rig_file;
    j["boxes"] = nlohmann::json::array();
    for (const auto& box : scene.boxes) {
        j["boxes"].push_back({{"center", {box.center.x, box.center.y, box.center.z}},
                              {"size", {box.size.x, box.size.y, box.size.z}},
                              {"yaw", box.yaw}});
    }
    return j.dump(2);
}

Scene scene_from_json(const std::string& json_text, std::string* rig_file_out) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scene JSON parse error: ") + e.what());
    }
    Scene scene;
    try {
        scene.seed = j.at("seed").get<std::uint64_t>();
        scene.sensor_height = j.at("sensor_height").get<double>();
        scene.range = j.at("range").get<double>();
        scene.ground_plane = j.at("ground_plane").get<bool>();
        if (rig_file_out) *rig_file_out = j.at("rig_file").get<std::string>();
        for (const auto& b : j.at("boxes")) {
            Box box;
            const auto c = b.at("center").get<std::array<double, 3>>();
            const auto s = b.at("size").get<std::array<double, 3>>();
            box.center = {c[0], c[1], c[2]};
            box.size = {s[0], s[1], s[2]};
            box.yaw = b.at("yaw").get<double>();
            scene.boxes.push_back(box);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scene JSON schema error: ") + e.what());
    }
    return scene;
}

void save_scene(const std::string& path, const Scene& scene, const std::string& rig_file) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError(path + ": cannot open for writing");
    }
    out << scene_to_json(scene, rig_file) << "\n";
    if (!out) {
        throw IoError(path + ": write failed");
    }
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path + ": cannot open scene file");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string rig_file;
    Scene scene = scene_from_json(text, &rig_file);
    if (!rig_file.empty()) {
        const auto rig_path = std::filesystem::path(path).parent_path() / rig_file;
        scene.rig = load_rig(rig_path.string());
    }
    return scene;
}

}  // namespace bevalign
