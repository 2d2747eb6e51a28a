#include "bevalign/config.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace bevalign {

void RunConfig::validate() const {
    noise.validate();
    bev.validate();
    if (k_graph < 1) throw ConfigError("config: k_graph must be >= 1");
    if (image_height < 16 || image_width < 16 || image_height % 8 != 0 ||
        image_width % 8 != 0) {
        throw ConfigError("config: image size must be >= 16 and divisible by 8");
    }
    if (camera_channels < 1 || context_channels < 1 || lidar_channels < 1) {
        throw ConfigError("config: channel widths must be >= 1");
    }
    if (dual_channels < 2 || dual_channels % 2 != 0) {
        throw ConfigError("config: dual_channels must be even and >= 2");
    }
    if (num_boxes < 0 || rays < 1 || z_slabs < 1) {
        throw ConfigError("config: invalid scene synthesis parameters");
    }
    if (recover_grid < 8 || recover_channels < 1 || recover_blur_radius < 0 ||
        recover_blur_passes < 0) {
        throw ConfigError("config: invalid recovery parameters");
    }
    if (2 * (static_cast<int>(optimizer.offset_clamp) + noise.bev_shift_max) + 8 >
        recover_grid) {
        throw ConfigError("config: recovery grid too small for the offset clamp and BEV shift");
    }
    if (optimizer.iterations < 1 || optimizer.learning_rate <= 0.0 ||
        optimizer.offset_clamp <= 0.0 || optimizer.max_halvings < 0 ||
        optimizer.stall_patience < 1) {
        throw ConfigError("config: invalid optimizer parameters");
    }
    if (frustum.depth_step <= 0.0 || frustum.depth_max <= frustum.depth_min ||
        frustum.feature_stride < 1) {
        throw ConfigError("config: invalid frustum parameters");
    }
    if (!rig_file.empty() && !std::filesystem::exists(rig_file)) {
        throw ConfigError("config: rig file does not exist: " + rig_file);
    }
}

std::string config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["rig_file"] = c.rig_file;
    j["out_dir"] = c.out_dir;
    j["noise"] = {{"rot_deg", c.noise.rot_deg},
                  {"trans_m", c.noise.trans_m},
                  {"bev_shift_max", c.noise.bev_shift_max}};
    j["k_graph"] = c.k_graph;
    j["image"] = {{"height", c.image_height}, {"width", c.image_width}};
    j["channels"] = {{"camera", c.camera_channels},
                     {"context", c.context_channels},
                     {"dual", c.dual_channels},
                     {"lidar", c.lidar_channels}};
    j["frustum"] = {{"depth_min", c.frustum.depth_min},
                    {"depth_max", c.frustum.depth_max},
                    {"depth_step", c.frustum.depth_step},
                    {"feature_stride", c.frustum.feature_stride}};
    j["bev"] = {{"x_min", c.bev.x_min}, {"x_max", c.bev.x_max}, {"y_min", c.bev.y_min},
                {"y_max", c.bev.y_max}, {"cell", c.bev.cell}};
    j["scene"] = {{"num_boxes", c.num_boxes}, {"rays", c.rays}, {"z_slabs", c.z_slabs}};
    j["recover"] = {{"grid", c.recover_grid},
                    {"channels", c.recover_channels},
                    {"blur_radius", c.recover_blur_radius},
                    {"blur_passes", c.recover_blur_passes}};
    j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                      {"iterations", c.optimizer.iterations},
                      {"offset_clamp", c.optimizer.offset_clamp},
                      {"max_halvings", c.optimizer.max_halvings},
                      {"stall_patience", c.optimizer.stall_patience}};
    return j.dump(2);
}

namespace {

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

}  // namespace

RunConfig config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON parse error: ") + e.what());
    }
    RunConfig c;
    try {
        maybe_get(j, "seed", c.seed);
        maybe_get(j, "rig_file", c.rig_file);
        maybe_get(j, "out_dir", c.out_dir);
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            maybe_get(n, "rot_deg", c.noise.rot_deg);
            maybe_get(n, "trans_m", c.noise.trans_m);
            maybe_get(n, "bev_shift_max", c.noise.bev_shift_max);
        }
        maybe_get(j, "k_graph", c.k_graph);
        if (j.contains("image")) {
            const auto& img = j.at("image");
            maybe_get(img, "height", c.image_height);
            maybe_get(img, "width", c.image_width);
        }
        if (j.contains("channels")) {
            const auto& ch = j.at("channels");
            maybe_get(ch, "camera", c.camera_channels);
            maybe_get(ch, "context", c.context_channels);
            maybe_get(ch, "dual", c.dual_channels);
            maybe_get(ch, "lidar", c.lidar_channels);
        }
        if (j.contains("frustum")) {
            const auto& f = j.at("frustum");
            maybe_get(f, "depth_min", c.frustum.depth_min);
            maybe_get(f, "depth_max", c.frustum.depth_max);
            maybe_get(f, "depth_step", c.frustum.depth_step);
            maybe_get(f, "feature_stride", c.frustum.feature_stride);
        }
        if (j.contains("bev")) {
            const auto& b = j.at("bev");
            maybe_get(b, "x_min", c.bev.x_min);
            maybe_get(b, "x_max", c.bev.x_max);
            maybe_get(b, "y_min", c.bev.y_min);
            maybe_get(b, "y_max", c.bev.y_max);
            maybe_get(b, "cell", c.bev.cell);
        }
        if (j.contains("scene")) {
            const auto& s = j.at("scene");
            maybe_get(s, "num_boxes", c.num_boxes);
            maybe_get(s, "rays", c.rays);
            maybe_get(s, "z_slabs", c.z_slabs);
        }
        if (j.contains("recover")) {
            const auto& r = j.at("recover");
            maybe_get(r, "grid", c.recover_grid);
            maybe_get(r, "channels", c.recover_channels);
            maybe_get(r, "blur_radius", c.recover_blur_radius);
            maybe_get(r, "blur_passes", c.recover_blur_passes);
        }
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            maybe_get(o, "learning_rate", c.optimizer.learning_rate);
            maybe_get(o, "iterations", c.optimizer.iterations);
            maybe_get(o, "offset_clamp", c.optimizer.offset_clamp);
            maybe_get(o, "max_halvings", c.optimizer.max_halvings);
            maybe_get(o, "stall_patience", c.optimizer.stall_patience);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON schema error: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path + ": cannot open config file");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

}  // namespace bevalign
