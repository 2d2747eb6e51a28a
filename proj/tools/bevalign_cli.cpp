// Command-line workflows over the alignment library: synthetic scene
// simulation, neighbor-depth robustness evaluation, BEV offset recovery, and
// stage benchmarks. Every command is reproducible from (config, seed).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "bevalign/bench.hpp"
#include "bevalign/config.hpp"
#include "bevalign/global_align.hpp"
#include "bevalign/local_align.hpp"
#include "bevalign/rng.hpp"
#include "bevalign/scene.hpp"
#include "bevalign/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bevalign;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return Rng(seed).fork(tag).next_u64();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError(path.string() + ": cannot open for writing");
    }
    out << text;
    if (!out) {
        throw IoError(path.string() + ": write failed");
    }
}

void require_artifact(const fs::path& path) {
    if (!fs::exists(path)) {
        throw IoError(path.string() + ": missing artifact (run `bevalign simulate` first)");
    }
}

fs::path ensure_out_dir(const RunConfig& config) {
    const fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError(config.out_dir + ": cannot create output directory");
    }
    return dir;
}

// Flags shared by every subcommand; unset options keep the config value.
struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    double noise_rot_deg = -1.0;
    double noise_trans_m = -1.0;
    int bev_shift_max = -1;
    int k_graph = -1;

    bool has_seed = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run configuration");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "master seed")->each([this](const std::string&) {
            has_seed = true;
        });
        cmd->add_option("--noise-rot-deg", noise_rot_deg, "extrinsic rotation noise, degrees");
        cmd->add_option("--noise-trans-m", noise_trans_m, "extrinsic translation noise, meters");
        cmd->add_option("--bev-shift-max", bev_shift_max, "max BEV camera shift, cells");
        cmd->add_option("--k-graph", k_graph, "neighbors per projected pixel");
    }

    RunConfig resolve() const {
        RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (!out_dir.empty()) config.out_dir = out_dir;
        if (has_seed) config.seed = seed;
        if (noise_rot_deg >= 0.0) config.noise.rot_deg = noise_rot_deg;
        if (noise_trans_m >= 0.0) config.noise.trans_m = noise_trans_m;
        if (bev_shift_max >= 0) config.noise.bev_shift_max = bev_shift_max;
        if (k_graph != -1) config.k_graph = k_graph;
        config.validate();
        return config;
    }
};

Scene build_scene(const RunConfig& config) {
    Scene scene = make_random_scene(config.seed, config.num_boxes, config.image_height,
                                    config.image_width);
    if (!config.rig_file.empty()) {
        scene.rig = load_rig(config.rig_file);
    }
    scene.validate();
    return scene;
}

std::string depth_file_name(std::size_t camera) {
    return "depth_cam" + std::to_string(camera) + ".gbev";
}

int cmd_simulate(const RunConfig& config) {
    const fs::path dir = ensure_out_dir(config);
    const Scene scene = build_scene(config);

    save_rig((dir / "rig.json").string(), scene.rig);
    save_scene((dir / "scene.json").string(), scene, "rig.json");

    const PointCloud cloud = sample_lidar(scene, config.rays);
    Tensor cloud_tensor;
    cloud_tensor.dims = {1, 3, 1, cloud.points.size()};
    cloud_tensor.data.reserve(cloud.points.size() * 3);
    for (int axis = 0; axis < 3; ++axis) {
        for (const auto& p : cloud.points) {
            cloud_tensor.data.push_back(
                static_cast<float>(axis == 0 ? p.x : (axis == 1 ? p.y : p.z)));
        }
    }
    write_tensor((dir / "cloud.gbev").string(), cloud_tensor);

    json cameras = json::array();
    for (std::size_t i = 0; i < scene.rig.size(); ++i) {
        const FeatureMap depth = render_true_depth(scene, scene.rig[i]);
        write_feature_map((dir / depth_file_name(i)).string(), depth);
        std::size_t nonzero = 0;
        for (float v : depth.data) nonzero += v > 0.0f;
        cameras.push_back({{"camera", i},
                           {"file", depth_file_name(i)},
                           {"nonzero_fraction",
                            static_cast<double>(nonzero) / static_cast<double>(depth.size())}});
    }

    json summary;
    summary["command"] = "simulate";
    summary["seed"] = config.seed;
    summary["boxes"] = scene.boxes.size();
    summary["points"] = cloud.points.size();
    summary["cameras"] = cameras;
    summary["scene_file"] = (dir / "scene.json").string();
    summary["cloud_file"] = (dir / "cloud.gbev").string();
    write_text(dir / "simulate_summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

PointCloud load_cloud(const fs::path& path) {
    require_artifact(path);
    const Tensor tensor = read_tensor(path.string());
    if (tensor.dims.size() != 4 || tensor.dims[0] != 1 || tensor.dims[1] != 3 ||
        tensor.dims[2] != 1) {
        throw IoError(path.string() + ": expected a point cloud tensor of dims (1, 3, 1, N)");
    }
    const std::size_t n = tensor.dims[3];
    PointCloud cloud;
    cloud.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        cloud.points[i] = {tensor.data[i], tensor.data[n + i], tensor.data[2 * n + i]};
    }
    return cloud;
}

int cmd_localalign_eval(const RunConfig& config, bool sweep_k, bool dump_neighbors) {
    const fs::path dir = ensure_out_dir(config);
    require_artifact(dir / "scene.json");
    const Scene scene = load_scene((dir / "scene.json").string());
    const PointCloud cloud = load_cloud(dir / "cloud.gbev");

    std::vector<int> ks = {config.k_graph};
    if (sweep_k) {
        ks = {5, 8, 12, 16, 25};
    }
    const int k_max = *std::max_element(ks.begin(), ks.end());

    std::ofstream jsonl(dir / "localalign_metrics.jsonl", std::ios::trunc);
    if (!jsonl) {
        throw IoError((dir / "localalign_metrics.jsonl").string() + ": cannot open");
    }

    // Pool per-pixel samples across cameras; e_self is k-independent.
    std::vector<DepthErrorSamples> pooled(ks.size());
    for (std::size_t cam_idx = 0; cam_idx < scene.rig.size(); ++cam_idx) {
        const CameraModel& clean_cam = scene.rig[cam_idx];
        const FeatureMap truth = read_feature_map((dir / depth_file_name(cam_idx)).string());
        const CameraModel noisy_cam =
            perturb_extrinsics(clean_cam, config.noise, derive_seed(config.seed, 0xca0 + cam_idx));
        const SparseDepth sparse = build_sparse_depth(project_points(cloud, noisy_cam),
                                                      clean_cam.height, clean_cam.width);
        const NeighborTable full_table = knn_neighbors(sparse, k_max);
        if (dump_neighbors) {
            const NeighborTable table = table_prefix(full_table, config.k_graph);
            write_text(dir / ("neighbors_cam" + std::to_string(cam_idx) + ".json"),
                       neighbor_table_to_json(sparse, table) + "\n");
        }
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
            const NeighborTable table = table_prefix(full_table, ks[ki]);
            const DepthErrorSamples samples = depth_error_samples(sparse, table, truth);
            const DepthErrorMetrics metrics = summarize_depth_errors(samples);
            json line;
            line["camera"] = cam_idx;
            line["k"] = ks[ki];
            line["pixels"] = metrics.evaluated;
            line["median_e_self"] = metrics.median_self;
            line["median_e_best"] = metrics.median_best;
            line["mean_e_self"] = metrics.mean_self;
            line["mean_e_best"] = metrics.mean_best;
            line["win_fraction"] = metrics.win_fraction;
            jsonl << line.dump() << "\n";
            pooled[ki].e_self.insert(pooled[ki].e_self.end(), samples.e_self.begin(),
                                     samples.e_self.end());
            pooled[ki].e_best.insert(pooled[ki].e_best.end(), samples.e_best.begin(),
                                     samples.e_best.end());
        }
    }

    json per_k = json::array();
    std::string csv = "k,pixels,median_e_self,median_e_best,mean_e_self,mean_e_best,"
                      "win_fraction\n";
    char row[256];
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        const DepthErrorMetrics metrics = summarize_depth_errors(pooled[ki]);
        per_k.push_back({{"k", ks[ki]},
                         {"pixels", metrics.evaluated},
                         {"median_e_self", metrics.median_self},
                         {"median_e_best", metrics.median_best},
                         {"mean_e_self", metrics.mean_self},
                         {"mean_e_best", metrics.mean_best},
                         {"win_fraction", metrics.win_fraction}});
        std::snprintf(row, sizeof(row), "%d,%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", ks[ki],
                      metrics.evaluated, metrics.median_self, metrics.median_best,
                      metrics.mean_self, metrics.mean_best, metrics.win_fraction);
        csv += row;
    }
    write_text(dir / "localalign_sweep.csv", csv);

    json summary;
    summary["command"] = "localalign-eval";
    summary["seed"] = config.seed;
    summary["noise"] = {{"rot_deg", config.noise.rot_deg}, {"trans_m", config.noise.trans_m}};
    summary["cameras"] = scene.rig.size();
    summary["metrics"] = per_k;
    summary["metrics_file"] = (dir / "localalign_metrics.jsonl").string();
    write_text(dir / "localalign_summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_globalalign_recover(const RunConfig& config) {
    const fs::path dir = ensure_out_dir(config);
    const RecoveryArtifacts art =
        run_bev_recovery(config.seed, config.recover_grid, config.recover_channels,
                         config.recover_blur_radius, config.recover_blur_passes, config.noise,
                         config.optimizer);

    std::ofstream jsonl(dir / "recover_loss.jsonl", std::ios::trunc);
    std::string csv = "iter,loss,mean_abs_du,mean_abs_dv\n";
    char row[160];
    for (const auto& stat : art.optimization.curve) {
        json line;
        line["iter"] = stat.iter;
        line["loss"] = stat.loss;
        line["mean_abs_du"] = stat.mean_abs_du;
        line["mean_abs_dv"] = stat.mean_abs_dv;
        jsonl << line.dump() << "\n";
        std::snprintf(row, sizeof(row), "%d,%.9g,%.9g,%.9g\n", stat.iter, stat.loss,
                      stat.mean_abs_du, stat.mean_abs_dv);
        csv += row;
    }
    write_text(dir / "recover_loss.csv", csv);
    write_feature_map((dir / "recovered_offsets.gbev").string(), art.optimization.offsets);
    write_feature_map((dir / "deform_bev.gbev").string(), art.deform_bev);
    write_feature_map((dir / "fused_target.gbev").string(), art.fused.target);

    json summary;
    summary["command"] = "globalalign-recover";
    summary["seed"] = config.seed;
    summary["injected_u"] = art.noisy.shift.du;
    summary["injected_v"] = art.noisy.shift.dv;
    summary["recovered_u"] = art.recovered_du;
    summary["recovered_v"] = art.recovered_dv;
    summary["final_loss"] = art.optimization.final_loss;
    summary["iters"] = art.optimization.curve.size();
    summary["stalled"] = art.optimization.stalled;
    summary["loss_curve"] = (dir / "recover_loss.jsonl").string();
    summary["offsets_file"] = (dir / "recovered_offsets.gbev").string();
    write_text(dir / "recover_summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_bench(const RunConfig& config) {
    const fs::path dir = ensure_out_dir(config);
    const int reps = 5;
    const Scene scene = build_scene(config);
    const CameraModel& cam = scene.rig[0];
    const PointCloud cloud = sample_lidar(scene, config.rays);

    json stages;
    stages["projection"] = time_stage_ms([&] { project_points(cloud, cam); }, reps);

    const PixelProjection proj = project_points(cloud, cam);
    stages["knn_build_query"] = time_stage_ms(
        [&] {
            const SparseDepth sparse = build_sparse_depth(proj, cam.height, cam.width);
            knn_neighbors(sparse, config.k_graph);
        },
        reps);

    const SparseDepth sparse = build_sparse_depth(proj, cam.height, cam.width);
    const NeighborTable table = knn_neighbors(sparse, config.k_graph);
    const FeatureMap d_k = gather_neighbor_depth(sparse, table);
    const FeatureMap f_cam = synth_camera_features(derive_seed(config.seed, 0xfca),
                                                   config.camera_channels, cam.height / 8,
                                                   cam.width / 8);
    const DualTransform dual =
        DualTransform::seeded(derive_seed(config.seed, 0xd0a1), config.k_graph,
                              config.dual_channels);
    const FrustumGrid frustum = make_frustum(cam, config.frustum);
    const DepthNet net =
        DepthNet::seeded(derive_seed(config.seed, 0xde9), config.camera_channels +
                             config.dual_channels, frustum.bins, config.context_channels);
    stages["dual_depthnet"] = time_stage_ms(
        [&] {
            const FeatureMap d_sk = dual_transform(sparse.depth, d_k, dual);
            depthnet(f_cam, d_sk, net);
        },
        reps);

    const FeatureMap d_sk = dual_transform(sparse.depth, d_k, dual);
    const DepthNetOutput dn = depthnet(f_cam, d_sk, net);
    const FeatureMap f_dc = depth_context_product(dn.depth_logits, dn.context);
    stages["bev_pool"] = time_stage_ms(
        [&] { bev_pool(f_dc, frustum, config.bev, config.context_channels); }, reps);

    OptimizeConfig bench_opt = config.optimizer;
    bench_opt.iterations = std::min(bench_opt.iterations, 60);
    stages["optimize"] = time_stage_ms(
        [&] {
            run_bev_recovery(config.seed, config.recover_grid, config.recover_channels,
                             config.recover_blur_radius, config.recover_blur_passes,
                             config.noise, bench_opt);
        },
        reps);

    json scaling = json::array();
    for (const auto& point :
         measure_knn_scaling({1000, 10000, 100000}, config.k_graph, 300, config.seed)) {
        scaling.push_back({{"n", point.n},
                           {"kd_us_per_query", point.kd_us},
                           {"brute_us_per_query", point.brute_us},
                           {"ratio", point.ratio}});
    }

    json summary;
    summary["command"] = "bench";
    summary["seed"] = config.seed;
    summary["repetitions"] = reps;
    summary["optimize_iterations"] = bench_opt.iterations;
    summary["stages_ms"] = stages;
    summary["knn_scaling"] = scaling;
    write_text(dir / "bench.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic LiDAR-camera BEV alignment toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    bool sweep_k = false;
    bool dump_neighbors = false;

    CLI::App* simulate = app.add_subcommand(
        "simulate", "Generate a seeded scene: rig, point cloud, true-depth renders");
    flags.attach(simulate);

    CLI::App* localalign = app.add_subcommand(
        "localalign-eval", "Projected-depth error vs neighbor-best under extrinsic noise");
    flags.attach(localalign);
    localalign->add_flag("--sweep-k", sweep_k, "evaluate k in {5, 8, 12, 16, 25}");
    localalign->add_flag("--dump-neighbors", dump_neighbors,
                         "write per-camera neighbor tables as JSON");

    CLI::App* globalalign = app.add_subcommand(
        "globalalign-recover", "Inject a BEV camera-block shift and recover it by descent");
    flags.attach(globalalign);

    CLI::App* bench = app.add_subcommand("bench", "Median wall time per pipeline stage");
    flags.attach(bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        const RunConfig config = flags.resolve();
        if (simulate->parsed()) return cmd_simulate(config);
        if (localalign->parsed()) return cmd_localalign_eval(config, sweep_k, dump_neighbors);
        if (globalalign->parsed()) return cmd_globalalign_recover(config);
        if (bench->parsed()) return cmd_bench(config);
        std::cerr << "no subcommand selected\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return 0;
}
