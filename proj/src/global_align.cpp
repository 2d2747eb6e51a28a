#include "bevalign/global_align.hpp"

#include <algorithm>
#include <cmath>

#include "bevalign/rng.hpp"

namespace bevalign {

VoxelFeature::VoxelFeature(int b, int c, int z, int h, int w) {
    if (b < 1 || c < 1 || z < 1 || h < 1 || w < 1) {
        throw ConfigError("VoxelFeature dims must all be >= 1");
    }
    batch = b;
    channels = c;
    depth = z;
    height = h;
    width = w;
    data.assign(static_cast<std::size_t>(b) * c * z * h * w, 0.0f);
}

VoxelFeature rasterize_points(const PointCloud& cloud, const BevGrid& bev, int z_slabs,
                              double z_min, double z_max) {
    bev.validate();
    if (z_slabs < 1 || z_max <= z_min) {
        throw ConfigError("rasterize_points: invalid z discretization");
    }
    VoxelFeature voxels(1, 1, z_slabs, bev.size_y(), bev.size_x());
    const double z_step = (z_max - z_min) / z_slabs;
    for (const auto& p : cloud.points) {
        int ix, iy;
        if (!bev.cell_of(p.x, p.y, ix, iy)) continue;
        const int iz = static_cast<int>(std::floor((p.z - z_min) / z_step));
        if (iz < 0 || iz >= z_slabs) continue;
        voxels.at(0, 0, iz, iy, ix) += 1.0f;
    }
    return voxels;
}

FeatureMap flatten_lidar_bev(const VoxelFeature& voxels) {
    FeatureMap out(voxels.batch, voxels.channels, voxels.height, voxels.width);
    for (int b = 0; b < voxels.batch; ++b) {
        for (int c = 0; c < voxels.channels; ++c) {
            for (int z = 0; z < voxels.depth; ++z) {
                for (int y = 0; y < voxels.height; ++y) {
                    for (int x = 0; x < voxels.width; ++x) {
                        out.at(b, c, y, x) += voxels.at(b, c, z, y, x);
                    }
                }
            }
        }
    }
    return out;
}

FeatureMap flatten_lidar_bev(const VoxelFeature& voxels, const BevGrid& bev) {
    bev.validate();
    if (voxels.height != bev.size_y() || voxels.width != bev.size_x()) {
        throw ConfigError("flatten_lidar_bev: voxel extent does not match the BEV grid");
    }
    return flatten_lidar_bev(voxels);
}

FeatureMap FusedBev::camera_block() const {
    FeatureMap out(fused.batch, camera_channels, fused.height, fused.width);
    const std::size_t plane = static_cast<std::size_t>(fused.height) * fused.width;
    for (int b = 0; b < fused.batch; ++b) {
        std::copy_n(&fused.data[fused.index(b, lidar_channels, 0, 0)], plane * camera_channels,
                    &out.data[out.index(b, 0, 0, 0)]);
    }
    return out;
}

FeatureMap FusedBev::lidar_block() const {
    FeatureMap out(fused.batch, lidar_channels, fused.height, fused.width);
    const std::size_t plane = static_cast<std::size_t>(fused.height) * fused.width;
    for (int b = 0; b < fused.batch; ++b) {
        std::copy_n(&fused.data[fused.index(b, 0, 0, 0)], plane * lidar_channels,
                    &out.data[out.index(b, 0, 0, 0)]);
    }
    return out;
}

FusedBev fuse_bev(const FeatureMap& f_l, const FeatureMap& f_c, const CbrBlock& fuse_block) {
    FusedBev fused;
    fused.fused = concat_channels(f_l, f_c);
    fused.lidar_channels = f_l.channels;
    fused.camera_channels = f_c.channels;
    if (fuse_block.out_channels != f_l.channels) {
        throw ConfigError("fuse_bev: fuse block must emit the LiDAR channel width");
    }
    fused.target = cbr(fused.fused, fuse_block);
    return fused;
}

FeatureMap translate_map(const FeatureMap& input, int du, int dv) {
    FeatureMap out(input.batch, input.channels, input.height, input.width);
    for (int b = 0; b < input.batch; ++b) {
        for (int c = 0; c < input.channels; ++c) {
            for (int y = 0; y < input.height; ++y) {
                const int sy = y - dv;
                if (sy < 0 || sy >= input.height) continue;
                for (int x = 0; x < input.width; ++x) {
                    const int sx = x - du;
                    if (sx < 0 || sx >= input.width) continue;
                    out.at(b, c, y, x) = input.at(b, c, sy, sx);
                }
            }
        }
    }
    return out;
}

NoisyBev inject_bev_noise(const FusedBev& fused, const NoiseSpec& noise, std::uint64_t seed) {
    noise.validate();
    NoisyBev out;
    Rng rng(Rng(seed).fork(0xbe5));
    out.shift.du = static_cast<int>(rng.uniform_int(-noise.bev_shift_max, noise.bev_shift_max));
    out.shift.dv = static_cast<int>(rng.uniform_int(-noise.bev_shift_max, noise.bev_shift_max));
    out.map = fused.fused;
    if (out.shift.du == 0 && out.shift.dv == 0) return out;

    const FeatureMap shifted = translate_map(fused.camera_block(), out.shift.du, out.shift.dv);
    const std::size_t plane = static_cast<std::size_t>(fused.fused.height) * fused.fused.width;
    for (int b = 0; b < fused.fused.batch; ++b) {
        std::copy_n(&shifted.data[shifted.index(b, 0, 0, 0)], plane * fused.camera_channels,
                    &out.map.data[out.map.index(b, fused.lidar_channels, 0, 0)]);
    }
    return out;
}

FeatureMap mm_align_forward(const FeatureMap& f_n, const FeatureMap& f_l,
                            const FeatureMap& offsets, const CbrBlock& align_block) {
    if (f_n.batch != f_l.batch || f_n.height != f_l.height || f_n.width != f_l.width) {
        throw ConfigError("mm_align_forward: fused and LiDAR features must share batch/spatial "
                          "dims");
    }
    const FeatureMap deform_weights = grid_sample_bilinear(f_l, offsets);
    FeatureMap adjusted(f_l.batch, f_l.channels, f_l.height, f_l.width);
    for (std::size_t i = 0; i < adjusted.data.size(); ++i) {
        adjusted.data[i] = deform_weights.data[i] * f_l.data[i];
    }
    return cbr(adjusted, align_block);
}

namespace {

struct Evaluation {
    double loss = 0.0;
    FeatureMap grad_offsets;  // only filled when with_grad
};

Evaluation evaluate(const FeatureMap& warped, const FeatureMap& modulator,
                    const CbrBlock& block, const FeatureMap& target, const FeatureMap& offsets,
                    bool with_grad) {
    const FeatureMap sampled = grid_sample_bilinear(warped, offsets);
    FeatureMap adjusted(warped.batch, warped.channels, warped.height, warped.width);
    for (std::size_t i = 0; i < adjusted.data.size(); ++i) {
        adjusted.data[i] = sampled.data[i] * modulator.data[i];
    }
    Evaluation eval;
    if (!with_grad) {
        eval.loss = mse_loss(cbr(adjusted, block), target).loss;
        return eval;
    }
    const CbrForward fwd = cbr_forward_cached(adjusted, block);
    MseResult mse = mse_loss(fwd.output, target);
    eval.loss = mse.loss;
    FeatureMap grad_adjusted = cbr_backward_input(block, fwd.pre_activation, mse.grad_a);
    for (std::size_t i = 0; i < grad_adjusted.data.size(); ++i) {
        grad_adjusted.data[i] *= modulator.data[i];
    }
    eval.grad_offsets = grid_sample_grad_offsets(warped, offsets, grad_adjusted);
    return eval;
}

double mean_abs_channel(const FeatureMap& offsets, int channel) {
    double acc = 0.0;
    std::size_t count = 0;
    for (int b = 0; b < offsets.batch; ++b) {
        for (int y = 0; y < offsets.height; ++y) {
            for (int x = 0; x < offsets.width; ++x) {
                acc += std::abs(offsets.at(b, channel, y, x));
                ++count;
            }
        }
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace

OptimizeResult optimize_alignment(const FeatureMap& warped, const FeatureMap& modulator,
                                  const CbrBlock& align_block, const FeatureMap& target,
                                  const OptimizeConfig& config) {
    if (!warped.same_shape(modulator)) {
        throw ConfigError("optimize_alignment: warped and modulator shapes differ");
    }
    if (config.iterations < 1 || config.learning_rate <= 0.0 || config.offset_clamp <= 0.0) {
        throw ConfigError("optimize_alignment: invalid optimizer configuration");
    }
    FeatureMap offsets(warped.batch, 2, warped.height, warped.width);
    OptimizeResult result;
    result.curve.reserve(config.iterations);

    const float clamp = static_cast<float>(config.offset_clamp);
    // The mse divisor B*H*W shrinks per-cell gradients with the grid, so undo
    // it for the step: the learning rate then means cells per unit of local
    // residual regardless of grid size.
    const double cell_scale =
        static_cast<double>(warped.batch) * warped.height * warped.width;
    double current_loss =
        evaluate(warped, modulator, align_block, target, offsets, false).loss;
    result.offsets = offsets;
    result.final_loss = current_loss;
    int last_improvement = 0;
    // Remembers the last workable fraction of the learning rate so the
    // halving search does not rediscover it every iteration.
    double step_scale = 1.0;

    for (int iter = 0; iter < config.iterations; ++iter) {
        if (!std::isfinite(current_loss)) {
            throw NumericalError("optimize_alignment: non-finite loss at iteration " +
                                 std::to_string(iter));
        }
        result.curve.push_back({iter, current_loss, mean_abs_channel(offsets, 0),
                                mean_abs_channel(offsets, 1)});
        if (current_loss < result.final_loss) {
            result.final_loss = current_loss;
            result.offsets = offsets;
            last_improvement = iter;
        }
        if (current_loss == 0.0) {
            break;  // exact optimum; the gradient is zero too
        }
        if (iter - last_improvement >= config.stall_patience) {
            result.stalled = true;
            break;
        }

        const Evaluation eval =
            evaluate(warped, modulator, align_block, target, offsets, true);
        // Probe the full learning rate first, then drop toward the last scale
        // that worked instead of re-halving from the top every iteration.
        double try_scale = 1.0;
        for (int attempt = 0; attempt <= config.max_halvings; ++attempt) {
            const double step = config.learning_rate * cell_scale * try_scale;
            FeatureMap candidate = offsets;
            for (std::size_t i = 0; i < candidate.data.size(); ++i) {
                const float v =
                    candidate.data[i] - static_cast<float>(step) * eval.grad_offsets.data[i];
                candidate.data[i] = std::clamp(v, -clamp, clamp);
            }
            const double candidate_loss =
                evaluate(warped, modulator, align_block, target, candidate, false).loss;
            if (candidate_loss <= current_loss) {
                offsets = std::move(candidate);
                current_loss = candidate_loss;
                step_scale = try_scale;
                break;
            }
            if (try_scale > step_scale * 2.0) {
                try_scale = step_scale * 2.0;
            } else {
                try_scale /= 2.0;
            }
        }
    }
    if (current_loss < result.final_loss) {
        result.final_loss = current_loss;
        result.offsets = offsets;
    }
    return result;
}

OptimizeResult optimize_offsets(const FeatureMap& f_n, const FeatureMap& f_l,
                                const CbrBlock& align_block, const FeatureMap& target,
                                const OptimizeConfig& config) {
    if (f_n.batch != f_l.batch || f_n.height != f_l.height || f_n.width != f_l.width) {
        throw ConfigError("optimize_offsets: fused and LiDAR features must share batch/spatial "
                          "dims");
    }
    return optimize_alignment(f_l, f_l, align_block, target, config);
}

RecoveryArtifacts run_bev_recovery(std::uint64_t seed, int grid, int channels, int blur_radius,
                                   int blur_passes, const NoiseSpec& noise,
                                   const OptimizeConfig& config) {
    if (grid < 8 || channels < 1) {
        throw ConfigError("run_bev_recovery: invalid grid or channel count");
    }
    // Feature statistics matched to the optimizer: the correlation length must
    // exceed the largest shift (per-cell landscapes stay convex over the
    // travel range) and the amplitude carries the gradient signal.
    constexpr float kMean = 1.5f;
    constexpr float kAmplitude = 1.2f;
    Rng stream(seed);

    RecoveryArtifacts art;
    art.lidar_bev = seeded_smooth_field(stream.next_u64(), 1, channels, grid, grid, blur_radius,
                                        blur_passes, kMean, kAmplitude);
    art.camera_bev = seeded_smooth_field(stream.next_u64(), 1, channels, grid, grid, blur_radius,
                                         blur_passes, kMean, kAmplitude);
    const CbrBlock fuse_block =
        CbrBlock::seeded(stream.next_u64(), 2 * channels, channels, 1, 1, 0, 0.2f);
    const CbrBlock align_block =
        CbrBlock::seeded(stream.next_u64(), channels, channels, 1, 1, 0, 0.2f);

    art.fused = fuse_bev(art.lidar_bev, art.camera_bev, fuse_block);
    art.noisy = inject_bev_noise(art.fused, noise, stream.next_u64());

    FeatureMap clean_product = art.camera_bev;
    for (std::size_t i = 0; i < clean_product.data.size(); ++i) {
        clean_product.data[i] *= art.lidar_bev.data[i];
    }
    art.align_target = cbr(clean_product, align_block);

    const FeatureMap displaced = art.noisy.map;  // full fused copy
    FeatureMap camera_block(1, channels, grid, grid);
    {
        const std::size_t plane = static_cast<std::size_t>(grid) * grid;
        std::copy_n(&displaced.data[displaced.index(0, channels, 0, 0)],
                    plane * static_cast<std::size_t>(channels), camera_block.data.begin());
    }
    art.optimization =
        optimize_alignment(camera_block, art.lidar_bev, align_block, art.align_target, config);

    art.deform_bev =
        mm_align_forward(art.noisy.map, art.lidar_bev, art.optimization.offsets, align_block);

    art.interior_margin = std::min(grid / 2 - 2,
                                   static_cast<int>(std::ceil(config.offset_clamp)) +
                                       noise.bev_shift_max);
    double du = 0.0, dv = 0.0;
    std::size_t count = 0;
    const int m = art.interior_margin;
    for (int y = m; y < grid - m; ++y) {
        for (int x = m; x < grid - m; ++x) {
            du += art.optimization.offsets.at(0, 0, y, x);
            dv += art.optimization.offsets.at(0, 1, y, x);
            ++count;
        }
    }
    art.recovered_du = count ? du / static_cast<double>(count) : 0.0;
    art.recovered_dv = count ? dv / static_cast<double>(count) : 0.0;
    return art;
}

NoiseSpec NoiseSchedule::at(double epoch_fraction, bool training) const {
    if (epoch_fraction < 0.0 || epoch_fraction > 1.0) {
        throw ConfigError("NoiseSchedule: epoch fraction must lie in [0, 1]");
    }
    if (!training) {
        return NoiseSpec{};
    }
    return train_noise;
}

}  // namespace bevalign
