#include "bevalign/local_align.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

namespace bevalign {

SparseDepth build_sparse_depth(const PixelProjection& proj, int height, int width) {
    if (height < 1 || width < 1) {
        throw ConfigError("build_sparse_depth: image size must be >= 1");
    }
    // (v, u) -> min depth; the map ordering gives the required coord order.
    std::map<std::pair<int, int>, float> cells;
    for (const auto& p : proj.points) {
        if (!p.valid) continue;
        const int u = static_cast<int>(std::lround(p.u));
        const int v = static_cast<int>(std::lround(p.v));
        if (u < 0 || u >= width || v < 0 || v >= height) continue;
        const float depth = static_cast<float>(p.depth);
        auto [it, inserted] = cells.try_emplace({v, u}, depth);
        if (!inserted && depth < it->second) {
            it->second = depth;
        }
    }
    SparseDepth sparse;
    sparse.depth = FeatureMap(1, 1, height, width);
    sparse.coords.reserve(cells.size());
    sparse.values.reserve(cells.size());
    for (const auto& [vu, depth] : cells) {
        sparse.coords.push_back({vu.second, vu.first});
        sparse.values.push_back(depth);
        sparse.depth.at(0, 0, vu.first, vu.second) = depth;
    }
    return sparse;
}

NeighborTable knn_neighbors(const SparseDepth& sparse, int k) {
    if (k < 1) {
        throw ConfigError("knn_neighbors: k must be >= 1");
    }
    NeighborTable table;
    table.k = k;
    const std::size_t n = sparse.coords.size();
    if (n == 0) return table;

    PixelKdTree tree(sparse.coords);
    table.neighbor_coords.resize(n * static_cast<std::size_t>(k));
    std::vector<int> found;
    for (std::size_t i = 0; i < n; ++i) {
        tree.knn(sparse.coords[i], k, static_cast<int>(i), found);
        PixelCoord* row = &table.neighbor_coords[i * k];
        for (std::size_t j = 0; j < found.size(); ++j) {
            row[j] = sparse.coords[found[j]];
        }
        // Short rows repeat the farthest available neighbor; a lone pixel has
        // none, so it repeats itself.
        const PixelCoord pad = found.empty() ? sparse.coords[i] : sparse.coords[found.back()];
        for (std::size_t j = found.size(); j < static_cast<std::size_t>(k); ++j) {
            row[j] = pad;
        }
    }
    return table;
}

NeighborTable table_prefix(const NeighborTable& table, int k) {
    if (k < 1 || k > table.k) {
        throw ConfigError("table_prefix: k must lie in [1, table.k]");
    }
    NeighborTable out;
    out.k = k;
    const std::size_t rows = table.k > 0 ? table.neighbor_coords.size() / table.k : 0;
    out.neighbor_coords.resize(rows * static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < rows; ++i) {
        for (int j = 0; j < k; ++j) {
            out.neighbor_coords[i * k + j] = table.neighbor(i, j);
        }
    }
    return out;
}

FeatureMap gather_neighbor_depth(const SparseDepth& sparse, const NeighborTable& table) {
    if (table.k < 1) {
        throw ConfigError("gather_neighbor_depth: table has no neighbors");
    }
    FeatureMap d_k(1, table.k, sparse.depth.height, sparse.depth.width);
    for (std::size_t i = 0; i < sparse.coords.size(); ++i) {
        const auto [u, v] = sparse.coords[i];
        for (int j = 0; j < table.k; ++j) {
            const auto [nu, nv] = table.neighbor(i, j);
            d_k.at(0, j, v, u) = sparse.depth.at(0, 0, nv, nu);
        }
    }
    return d_k;
}

std::string neighbor_table_to_json(const SparseDepth& sparse, const NeighborTable& table) {
    nlohmann::json j;
    j["k"] = table.k;
    j["pixels"] = nlohmann::json::array();
    for (std::size_t i = 0; i < sparse.coords.size(); ++i) {
        nlohmann::json entry;
        entry["coord"] = sparse.coords[i];
        entry["depth"] = sparse.values[i];
        auto neighbors = nlohmann::json::array();
        for (int jj = 0; jj < table.k; ++jj) {
            neighbors.push_back(table.neighbor(i, jj));
        }
        entry["neighbors"] = neighbors;
        j["pixels"].push_back(entry);
    }
    return j.dump();
}

DualTransform DualTransform::seeded(std::uint64_t seed, int k_graph, int out_channels) {
    if (out_channels < 2 || out_channels % 2 != 0) {
        throw ConfigError("DualTransform: out_channels must be even and >= 2");
    }
    const int half = out_channels / 2;
    const int mid = std::max(8, half / 2);
    DualTransform dt;
    dt.depth_branch = {CbrBlock::seeded(seed ^ 0xd5a1, 1, mid, 3, 2, 1),
                       CbrBlock::seeded(seed ^ 0xd5a2, mid, half, 3, 2, 1),
                       CbrBlock::seeded(seed ^ 0xd5a3, half, half, 3, 2, 1)};
    dt.neighbor_branch = {CbrBlock::seeded(seed ^ 0xd5b1, k_graph, mid, 3, 2, 1),
                          CbrBlock::seeded(seed ^ 0xd5b2, mid, half, 3, 2, 1),
                          CbrBlock::seeded(seed ^ 0xd5b3, half, half, 3, 2, 1)};
    return dt;
}

namespace {

int branch_stride(const std::vector<CbrBlock>& branch) {
    int stride = 1;
    for (const auto& b : branch) stride *= b.stride;
    return stride;
}

FeatureMap run_branch(FeatureMap input, const std::vector<CbrBlock>& branch) {
    for (const auto& block : branch) {
        input = cbr(input, block);
    }
    return input;
}

}  // namespace

FeatureMap dual_transform(const FeatureMap& d_s, const FeatureMap& d_k,
                          const DualTransform& blocks) {
    if (blocks.depth_branch.empty() || blocks.neighbor_branch.empty()) {
        throw ConfigError("dual_transform: empty branch");
    }
    if (branch_stride(blocks.depth_branch) != 8 || branch_stride(blocks.neighbor_branch) != 8) {
        throw ConfigError("dual_transform: each branch must have total stride 8");
    }
    if (d_s.height % 8 != 0 || d_s.width % 8 != 0) {
        throw ConfigError("dual_transform: input size " + std::to_string(d_s.height) + "x" +
                          std::to_string(d_s.width) + " is not divisible by 8");
    }
    if (d_s.batch != d_k.batch || d_s.height != d_k.height || d_s.width != d_k.width) {
        throw ConfigError("dual_transform: the two depth maps must share batch/spatial dims");
    }
    return concat_channels(run_branch(d_s, blocks.depth_branch),
                           run_branch(d_k, blocks.neighbor_branch));
}

DepthNet DepthNet::seeded(std::uint64_t seed, int in_channels, int depth_channels,
                          int context_channels) {
    const int out = depth_channels + context_channels;
    const int mid = (in_channels + out) / 2;
    DepthNet net;
    net.depth_channels = depth_channels;
    net.context_channels = context_channels;
    net.blocks = {CbrBlock::seeded(seed ^ 0xde1, in_channels, mid, 3, 1, 1),
                  CbrBlock::seeded(seed ^ 0xde2, mid, mid, 3, 1, 1),
                  CbrBlock::seeded(seed ^ 0xde3, mid, out, 3, 1, 1)};
    return net;
}

DepthNetOutput depthnet(const FeatureMap& f_cam, const FeatureMap& d_sk, const DepthNet& net) {
    if (net.blocks.empty()) {
        throw ConfigError("depthnet: no blocks configured");
    }
    const int out_channels = net.blocks.back().out_channels;
    if (net.depth_channels + net.context_channels != out_channels) {
        throw ConfigError("depthnet: channel split " + std::to_string(net.depth_channels) + "+" +
                          std::to_string(net.context_channels) + " does not match output width " +
                          std::to_string(out_channels));
    }
    FeatureMap fused = concat_channels(f_cam, d_sk);
    for (const auto& block : net.blocks) {
        fused = cbr(fused, block);
    }
    DepthNetOutput out;
    out.depth_logits = FeatureMap(fused.batch, net.depth_channels, fused.height, fused.width);
    out.context = FeatureMap(fused.batch, net.context_channels, fused.height, fused.width);
    for (int b = 0; b < fused.batch; ++b) {
        for (int c = 0; c < net.depth_channels; ++c) {
            for (int y = 0; y < fused.height; ++y) {
                for (int x = 0; x < fused.width; ++x) {
                    out.depth_logits.at(b, c, y, x) = fused.at(b, c, y, x);
                }
            }
        }
        for (int c = 0; c < net.context_channels; ++c) {
            for (int y = 0; y < fused.height; ++y) {
                for (int x = 0; x < fused.width; ++x) {
                    out.context.at(b, c, y, x) = fused.at(b, net.depth_channels + c, y, x);
                }
            }
        }
    }
    return out;
}

FeatureMap depth_context_product(const FeatureMap& depth_logits, const FeatureMap& context) {
    if (depth_logits.batch != context.batch || depth_logits.height != context.height ||
        depth_logits.width != context.width) {
        throw ConfigError("depth_context_product: batch/spatial dims mismatch");
    }
    const FeatureMap weights = softmax_channels(depth_logits);
    const int bins = depth_logits.channels;
    const int ctx = context.channels;
    FeatureMap out(context.batch, ctx * bins, context.height, context.width);
    for (int b = 0; b < context.batch; ++b) {
        for (int cc = 0; cc < ctx; ++cc) {
            for (int cd = 0; cd < bins; ++cd) {
                const int oc = cc * bins + cd;
                for (int y = 0; y < context.height; ++y) {
                    for (int x = 0; x < context.width; ++x) {
                        out.at(b, oc, y, x) = weights.at(b, cd, y, x) * context.at(b, cc, y, x);
                    }
                }
            }
        }
    }
    return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
    if (a.batch != b.batch || a.height != b.height || a.width != b.width) {
        throw ConfigError("concat_channels: batch/spatial dims mismatch");
    }
    FeatureMap out(a.batch, a.channels + b.channels, a.height, a.width);
    const std::size_t plane = static_cast<std::size_t>(a.height) * a.width;
    for (int bb = 0; bb < a.batch; ++bb) {
        std::copy_n(&a.data[a.index(bb, 0, 0, 0)], plane * a.channels,
                    &out.data[out.index(bb, 0, 0, 0)]);
        std::copy_n(&b.data[b.index(bb, 0, 0, 0)], plane * b.channels,
                    &out.data[out.index(bb, a.channels, 0, 0)]);
    }
    return out;
}

FrustumGrid make_frustum(const CameraModel& cam, const FrustumConfig& config) {
    cam.validate();
    if (config.depth_step <= 0.0 || config.depth_max <= config.depth_min) {
        throw ConfigError("FrustumConfig: invalid depth range");
    }
    if (config.feature_stride < 1 || cam.height % config.feature_stride != 0 ||
        cam.width % config.feature_stride != 0) {
        throw ConfigError("FrustumConfig: image size must be divisible by the feature stride");
    }
    FrustumGrid grid;
    grid.bins = static_cast<int>(std::floor((config.depth_max - config.depth_min) /
                                            config.depth_step));
    if (grid.bins < 1) {
        throw ConfigError("FrustumConfig: no depth bins");
    }
    grid.height = cam.height / config.feature_stride;
    grid.width = cam.width / config.feature_stride;
    grid.coords.resize(static_cast<std::size_t>(grid.bins) * grid.height * grid.width * 3);
    const Mat3 rot_t = cam.rotation.transposed();
    for (int bin = 0; bin < grid.bins; ++bin) {
        const double depth = config.depth_min + config.depth_step * bin;
        for (int y = 0; y < grid.height; ++y) {
            // Feature cell centers in full-resolution pixel coordinates.
            const double v = y * config.feature_stride + (config.feature_stride - 1) / 2.0;
            for (int x = 0; x < grid.width; ++x) {
                const double u = x * config.feature_stride + (config.feature_stride - 1) / 2.0;
                const Vec3 q{(u / cam.scale - cam.cx) / cam.fx * depth,
                             (v / cam.scale - cam.cy) / cam.fy * depth, depth};
                const Vec3 p = rot_t * (q - cam.translation);
                const std::size_t idx = grid.coord_index(bin, y, x);
                grid.coords[idx + 0] = static_cast<float>(p.x);
                grid.coords[idx + 1] = static_cast<float>(p.y);
                grid.coords[idx + 2] = static_cast<float>(p.z);
            }
        }
    }
    return grid;
}

int BevGrid::size_x() const {
    return static_cast<int>(std::lround((x_max - x_min) / cell));
}

int BevGrid::size_y() const {
    return static_cast<int>(std::lround((y_max - y_min) / cell));
}

void BevGrid::validate() const {
    if (cell <= 0.0 || x_max <= x_min || y_max <= y_min) {
        throw ConfigError("BevGrid: invalid extents");
    }
    const double nx = (x_max - x_min) / cell;
    const double ny = (y_max - y_min) / cell;
    if (std::abs(nx - std::lround(nx)) > 1e-6 || std::abs(ny - std::lround(ny)) > 1e-6) {
        throw ConfigError("BevGrid: extents are not an integer number of cells");
    }
}

bool BevGrid::cell_of(double x, double y, int& ix, int& iy) const {
    ix = static_cast<int>(std::floor((x - x_min) / cell));
    iy = static_cast<int>(std::floor((y - y_min) / cell));
    return ix >= 0 && ix < size_x() && iy >= 0 && iy < size_y();
}

FeatureMap bev_pool(const FeatureMap& f_dc, const FrustumGrid& frustum, const BevGrid& bev,
                    int context_channels) {
    bev.validate();
    if (context_channels < 1 || f_dc.channels % context_channels != 0 ||
        f_dc.channels / context_channels != frustum.bins) {
        throw ConfigError("bev_pool: feature channels must be context_channels x frustum bins");
    }
    if (f_dc.height != frustum.height || f_dc.width != frustum.width) {
        throw ConfigError("bev_pool: feature plane does not match the frustum");
    }
    FeatureMap out(f_dc.batch, context_channels, bev.size_y(), bev.size_x());
    for (int b = 0; b < f_dc.batch; ++b) {
        for (int bin = 0; bin < frustum.bins; ++bin) {
            for (int y = 0; y < frustum.height; ++y) {
                for (int x = 0; x < frustum.width; ++x) {
                    const std::size_t ci = frustum.coord_index(bin, y, x);
                    int ix, iy;
                    if (!bev.cell_of(frustum.coords[ci], frustum.coords[ci + 1], ix, iy)) {
                        continue;
                    }
                    for (int cc = 0; cc < context_channels; ++cc) {
                        out.at(b, cc, iy, ix) += f_dc.at(b, cc * frustum.bins + bin, y, x);
                    }
                }
            }
        }
    }
    return out;
}

FeatureMap synth_camera_features(std::uint64_t seed, int channels, int height, int width,
                                 const FeatureMap* depth_hint) {
    FeatureMap features =
        seeded_smooth_field(seed, 1, channels, height, width, 2, 2, 0.5f, 0.5f);
    if (depth_hint == nullptr) return features;

    if (depth_hint->height % height != 0 || depth_hint->width % width != 0) {
        throw ConfigError("synth_camera_features: depth hint is not an integer multiple of the "
                          "feature plane");
    }
    const int fy = depth_hint->height / height;
    const int fx = depth_hint->width / width;
    float max_depth = 0.0f;
    for (float v : depth_hint->data) max_depth = std::max(max_depth, v);
    if (max_depth <= 0.0f) return features;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < fy; ++dy) {
                for (int dx = 0; dx < fx; ++dx) {
                    acc += depth_hint->at(0, 0, y * fy + dy, x * fx + dx);
                }
            }
            const float hint = static_cast<float>(acc / (fy * fx) / max_depth);
            for (int c = 0; c < channels; ++c) {
                features.at(0, c, y, x) += 0.3f * hint;
            }
        }
    }
    return features;
}

DepthErrorSamples depth_error_samples(const SparseDepth& sparse, const NeighborTable& table,
                                      const FeatureMap& truth) {
    if (truth.height != sparse.depth.height || truth.width != sparse.depth.width) {
        throw ConfigError("depth_error_samples: truth map size mismatch");
    }
    DepthErrorSamples samples;
    samples.e_self.reserve(sparse.coords.size());
    samples.e_best.reserve(sparse.coords.size());
    for (std::size_t i = 0; i < sparse.coords.size(); ++i) {
        const auto [u, v] = sparse.coords[i];
        const float t = truth.at(0, 0, v, u);
        if (t <= 0.0f) continue;
        const float e_self = std::abs(sparse.values[i] - t);
        float e_best = e_self;  // the candidate set includes the pixel itself
        for (int j = 0; j < table.k; ++j) {
            const auto [nu, nv] = table.neighbor(i, j);
            e_best = std::min(e_best, std::abs(sparse.depth.at(0, 0, nv, nu) - t));
        }
        samples.e_self.push_back(e_self);
        samples.e_best.push_back(e_best);
    }
    return samples;
}

namespace {

double median_of(std::vector<float> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (static_cast<double>(values[n / 2 - 1]) + values[n / 2]) / 2.0;
}

double mean_of(const std::vector<float>& values) {
    if (values.empty()) return 0.0;
    double acc = 0.0;
    for (float v : values) acc += v;
    return acc / static_cast<double>(values.size());
}

}  // namespace

DepthErrorMetrics summarize_depth_errors(const DepthErrorSamples& samples) {
    DepthErrorMetrics m;
    m.evaluated = samples.e_self.size();
    if (m.evaluated == 0) return m;
    m.median_self = median_of(samples.e_self);
    m.mean_self = mean_of(samples.e_self);
    m.median_best = median_of(samples.e_best);
    m.mean_best = mean_of(samples.e_best);
    std::size_t wins = 0;
    for (std::size_t i = 0; i < samples.e_self.size(); ++i) {
        if (samples.e_best[i] < samples.e_self[i]) ++wins;
    }
    m.win_fraction = static_cast<double>(wins) / static_cast<double>(m.evaluated);
    return m;
}

DepthErrorMetrics depth_error_report(const SparseDepth& sparse, const NeighborTable& table,
                                     const FeatureMap& truth) {
    return summarize_depth_errors(depth_error_samples(sparse, table, truth));
}

}  // namespace bevalign
