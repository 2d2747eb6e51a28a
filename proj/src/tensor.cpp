#include "bevalign/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bevalign/rng.hpp"

namespace bevalign {

FeatureMap::FeatureMap(int b, int c, int h, int w, float fill) {
    if (b < 1 || c < 1 || h < 1 || w < 1) {
        throw ConfigError("FeatureMap dims must all be >= 1, got (" + std::to_string(b) + ", " +
                          std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) +
                          ")");
    }
    batch = b;
    channels = c;
    height = h;
    width = w;
    data.assign(static_cast<std::size_t>(b) * c * h * w, fill);
}

void FeatureMap::check_finite(const char* label) const {
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string(label) + ": non-finite value in feature map");
        }
    }
}

void CbrBlock::validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1) {
        throw ConfigError("CbrBlock: channel and kernel dims must be >= 1");
    }
    if (stride < 1 || padding < 0) {
        throw ConfigError("CbrBlock: stride must be >= 1 and padding >= 0");
    }
    const auto expected =
        static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
    if (weights.size() != expected || bias.size() != static_cast<std::size_t>(out_channels)) {
        throw ConfigError("CbrBlock: weight/bias size mismatch");
    }
    const auto oc = static_cast<std::size_t>(out_channels);
    if (bn_gamma.size() != oc || bn_beta.size() != oc || bn_mean.size() != oc ||
        bn_var.size() != oc) {
        throw ConfigError("CbrBlock: BN parameter size mismatch");
    }
    if (bn_epsilon <= 0.0f) {
        throw ConfigError("CbrBlock: BN epsilon must be positive");
    }
    for (float v : bn_var) {
        if (v <= 0.0f) {
            throw ConfigError("CbrBlock: BN variance entries must be positive");
        }
    }
}

CbrBlock CbrBlock::seeded(std::uint64_t seed, int in_ch, int out_ch, int kernel, int stride,
                          int padding, float bias_value) {
    CbrBlock block;
    block.in_channels = in_ch;
    block.out_channels = out_ch;
    block.kernel_h = kernel;
    block.kernel_w = kernel;
    block.stride = stride;
    block.padding = padding;
    const int fan_in = in_ch * kernel * kernel;
    block.weights.resize(static_cast<std::size_t>(out_ch) * fan_in);
    Rng rng(seed);
    const double scale = std::sqrt(2.0 / fan_in);
    for (auto& w : block.weights) {
        w = static_cast<float>(rng.normal(0.0, scale));
    }
    if (kernel == 1) {
        // Gram-Schmidt over output rows, then flip rows toward positive sums
        // so ReLU units stay mostly live on positive-mean features.
        const int rows = std::min(out_ch, in_ch);
        for (int r = 0; r < rows; ++r) {
            float* wr = &block.weights[static_cast<std::size_t>(r) * in_ch];
            for (int p = 0; p < r; ++p) {
                const float* wp = &block.weights[static_cast<std::size_t>(p) * in_ch];
                double dot = 0.0;
                for (int i = 0; i < in_ch; ++i) dot += static_cast<double>(wr[i]) * wp[i];
                for (int i = 0; i < in_ch; ++i) wr[i] -= static_cast<float>(dot) * wp[i];
            }
            double norm = 0.0;
            for (int i = 0; i < in_ch; ++i) norm += static_cast<double>(wr[i]) * wr[i];
            norm = std::sqrt(std::max(norm, 1e-12));
            for (int i = 0; i < in_ch; ++i) wr[i] = static_cast<float>(wr[i] / norm);
        }
        for (int r = 0; r < out_ch; ++r) {
            float* wr = &block.weights[static_cast<std::size_t>(r) * in_ch];
            double sum = 0.0;
            for (int i = 0; i < in_ch; ++i) sum += wr[i];
            if (sum < 0.0) {
                for (int i = 0; i < in_ch; ++i) wr[i] = -wr[i];
            }
        }
    }
    block.bias.assign(out_ch, bias_value);
    block.bn_gamma.assign(out_ch, 1.0f);
    block.bn_beta.assign(out_ch, 0.0f);
    block.bn_mean.assign(out_ch, 0.0f);
    block.bn_var.assign(out_ch, 1.0f);
    return block;
}

CbrBlock CbrBlock::identity(int ch) {
    CbrBlock block;
    block.in_channels = ch;
    block.out_channels = ch;
    block.kernel_h = 1;
    block.kernel_w = 1;
    block.stride = 1;
    block.padding = 0;
    block.weights.assign(static_cast<std::size_t>(ch) * ch, 0.0f);
    for (int c = 0; c < ch; ++c) {
        block.weights[static_cast<std::size_t>(c) * ch + c] = 1.0f;
    }
    block.bias.assign(ch, 0.0f);
    block.bn_gamma.assign(ch, 1.0f);
    block.bn_beta.assign(ch, 0.0f);
    block.bn_mean.assign(ch, 0.0f);
    block.bn_var.assign(ch, 1.0f);
    return block;
}

FeatureMap conv2d(const FeatureMap& input, const CbrBlock& block) {
    block.validate();
    if (input.channels != block.in_channels) {
        throw ConfigError("conv2d: input has " + std::to_string(input.channels) +
                          " channels, block expects " + std::to_string(block.in_channels));
    }
    const int oh = block.out_height(input.height);
    const int ow = block.out_width(input.width);
    if (oh < 1 || ow < 1) {
        throw ConfigError("conv2d: zero-size output for input " + std::to_string(input.height) +
                          "x" + std::to_string(input.width));
    }
    FeatureMap out(input.batch, block.out_channels, oh, ow);
    if (block.kernel_h == 1 && block.kernel_w == 1 && block.stride == 1 && block.padding == 0) {
        // Pointwise convolution; the optimizer's inner loop lives here.
        const std::size_t plane = static_cast<std::size_t>(oh) * ow;
        for (int b = 0; b < input.batch; ++b) {
            for (int oc = 0; oc < block.out_channels; ++oc) {
                const float* w = &block.weights[static_cast<std::size_t>(oc) * block.in_channels];
                const double bias = block.bias[oc];
                float* dst = &out.data[out.index(b, oc, 0, 0)];
                const float* src = &input.data[input.index(b, 0, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) {
                    double acc = bias;
                    for (int ic = 0; ic < block.in_channels; ++ic) {
                        acc += static_cast<double>(w[ic]) * src[ic * plane + i];
                    }
                    dst[i] = static_cast<float>(acc);
                }
            }
        }
        return out;
    }
    // Row-accumulator form: for each output row, sweep (ic, ky, kx) once and
    // add the weighted input row into a double accumulator. Terms reach each
    // output cell in the same (ic, ky, kx) order as the naive quadruple loop.
    std::vector<double> acc(static_cast<std::size_t>(ow));
    for (int b = 0; b < input.batch; ++b) {
        for (int oc = 0; oc < block.out_channels; ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
                std::fill(acc.begin(), acc.end(), static_cast<double>(block.bias[oc]));
                for (int ic = 0; ic < block.in_channels; ++ic) {
                    for (int ky = 0; ky < block.kernel_h; ++ky) {
                        const int iy = oy * block.stride - block.padding + ky;
                        if (iy < 0 || iy >= input.height) continue;
                        const float* in_row = &input.data[input.index(b, ic, iy, 0)];
                        const float* w_row =
                            &block.weights[((static_cast<std::size_t>(oc) * block.in_channels +
                                             ic) *
                                                block.kernel_h +
                                            ky) *
                                           block.kernel_w];
                        for (int kx = 0; kx < block.kernel_w; ++kx) {
                            const double w = w_row[kx];
                            const int shift = kx - block.padding;
                            // Valid ox range keeping ox*stride + shift inside the row.
                            int ox_lo = 0;
                            if (shift < 0) {
                                ox_lo = (-shift + block.stride - 1) / block.stride;
                            }
                            const int last_ix = input.width - 1 - shift;
                            if (last_ix < 0) continue;
                            const int ox_hi = std::min(ow - 1, last_ix / block.stride);
                            const float* in_shifted = in_row + shift;
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                acc[ox] += w * in_shifted[ox * block.stride];
                            }
                        }
                    }
                }
                float* out_row = &out.data[out.index(b, oc, oy, 0)];
                for (int ox = 0; ox < ow; ++ox) {
                    out_row[ox] = static_cast<float>(acc[ox]);
                }
            }
        }
    }
    return out;
}

namespace {

void apply_bn_relu(FeatureMap& map, const CbrBlock& block, FeatureMap* pre_activation) {
    const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
    for (int b = 0; b < map.batch; ++b) {
        for (int c = 0; c < map.channels; ++c) {
            const double inv_std = 1.0 / std::sqrt(static_cast<double>(block.bn_var[c]) +
                                                   block.bn_epsilon);
            const double gamma = block.bn_gamma[c];
            const double beta = block.bn_beta[c];
            const double mean = block.bn_mean[c];
            float* p = &map.data[map.index(b, c, 0, 0)];
            float* pre = pre_activation ? &pre_activation->data[map.index(b, c, 0, 0)] : nullptr;
            for (std::size_t i = 0; i < plane; ++i) {
                const double n = (static_cast<double>(p[i]) - mean) * inv_std * gamma + beta;
                if (pre) pre[i] = static_cast<float>(n);
                p[i] = static_cast<float>(n > 0.0 ? n : 0.0);
            }
        }
    }
}

}  // namespace

FeatureMap cbr(const FeatureMap& input, const CbrBlock& block) {
    FeatureMap out = conv2d(input, block);
    apply_bn_relu(out, block, nullptr);
    return out;
}

CbrForward cbr_forward_cached(const FeatureMap& input, const CbrBlock& block) {
    CbrForward fwd;
    fwd.output = conv2d(input, block);
    fwd.pre_activation = FeatureMap(fwd.output.batch, fwd.output.channels, fwd.output.height,
                                    fwd.output.width);
    apply_bn_relu(fwd.output, block, &fwd.pre_activation);
    return fwd;
}

FeatureMap cbr_backward_input(const CbrBlock& block, const FeatureMap& pre_activation,
                              const FeatureMap& upstream) {
    block.validate();
    if (!pre_activation.same_shape(upstream)) {
        throw ConfigError("cbr_backward_input: upstream shape mismatch");
    }
    if (upstream.channels != block.out_channels) {
        throw ConfigError("cbr_backward_input: upstream channels mismatch");
    }
    // ReLU mask and the linear BN scale, then scatter back through the kernel.
    const int ih = (upstream.height - 1) * block.stride - 2 * block.padding + block.kernel_h;
    const int iw = (upstream.width - 1) * block.stride - 2 * block.padding + block.kernel_w;
    FeatureMap grad_in(upstream.batch, block.in_channels, ih, iw, 0.0f);
    if (block.kernel_h == 1 && block.kernel_w == 1 && block.stride == 1 && block.padding == 0) {
        const std::size_t plane = static_cast<std::size_t>(ih) * iw;
        std::vector<double> bn_scale(block.out_channels);
        for (int oc = 0; oc < block.out_channels; ++oc) {
            bn_scale[oc] = static_cast<double>(block.bn_gamma[oc]) /
                           std::sqrt(static_cast<double>(block.bn_var[oc]) + block.bn_epsilon);
        }
        for (int b = 0; b < upstream.batch; ++b) {
            for (int ic = 0; ic < block.in_channels; ++ic) {
                float* dst = &grad_in.data[grad_in.index(b, ic, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) {
                    double acc = 0.0;
                    for (int oc = 0; oc < block.out_channels; ++oc) {
                        const std::size_t oi = upstream.index(b, oc, 0, 0) + i;
                        if (pre_activation.data[oi] <= 0.0f) continue;
                        acc += static_cast<double>(upstream.data[oi]) * bn_scale[oc] *
                               block.weights[static_cast<std::size_t>(oc) * block.in_channels +
                                             ic];
                    }
                    dst[i] = static_cast<float>(acc);
                }
            }
        }
        return grad_in;
    }
    for (int b = 0; b < upstream.batch; ++b) {
        for (int oc = 0; oc < block.out_channels; ++oc) {
            const double scale = static_cast<double>(block.bn_gamma[oc]) /
                                 std::sqrt(static_cast<double>(block.bn_var[oc]) +
                                           block.bn_epsilon);
            for (int oy = 0; oy < upstream.height; ++oy) {
                for (int ox = 0; ox < upstream.width; ++ox) {
                    if (pre_activation.at(b, oc, oy, ox) <= 0.0f) continue;
                    const double g = static_cast<double>(upstream.at(b, oc, oy, ox)) * scale;
                    if (g == 0.0) continue;
                    for (int ic = 0; ic < block.in_channels; ++ic) {
                        for (int ky = 0; ky < block.kernel_h; ++ky) {
                            const int iy = oy * block.stride - block.padding + ky;
                            if (iy < 0 || iy >= ih) continue;
                            for (int kx = 0; kx < block.kernel_w; ++kx) {
                                const int ix = ox * block.stride - block.padding + kx;
                                if (ix < 0 || ix >= iw) continue;
                                const std::size_t widx =
                                    ((static_cast<std::size_t>(oc) * block.in_channels + ic) *
                                         block.kernel_h +
                                     ky) *
                                        block.kernel_w +
                                    kx;
                                grad_in.at(b, ic, iy, ix) +=
                                    static_cast<float>(g * block.weights[widx]);
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

FeatureMap softmax_channels(const FeatureMap& input) {
    FeatureMap out(input.batch, input.channels, input.height, input.width);
    for (int b = 0; b < input.batch; ++b) {
        for (int y = 0; y < input.height; ++y) {
            for (int x = 0; x < input.width; ++x) {
                float max_logit = input.at(b, 0, y, x);
                for (int c = 1; c < input.channels; ++c) {
                    max_logit = std::max(max_logit, input.at(b, c, y, x));
                }
                double denom = 0.0;
                for (int c = 0; c < input.channels; ++c) {
                    denom += std::exp(static_cast<double>(input.at(b, c, y, x)) - max_logit);
                }
                for (int c = 0; c < input.channels; ++c) {
                    out.at(b, c, y, x) = static_cast<float>(
                        std::exp(static_cast<double>(input.at(b, c, y, x)) - max_logit) / denom);
                }
            }
        }
    }
    return out;
}

namespace {

void check_offset_shapes(const FeatureMap& input, const FeatureMap& offsets) {
    if (offsets.channels != 2) {
        throw ConfigError("grid_sample: offsets must have 2 channels (du, dv), got " +
                          std::to_string(offsets.channels));
    }
    if (offsets.batch != input.batch || offsets.height != input.height ||
        offsets.width != input.width) {
        throw ConfigError("grid_sample: offsets batch/spatial dims must match input");
    }
}

inline float tap(const FeatureMap& m, int b, int c, int y, int x) {
    if (y < 0 || y >= m.height || x < 0 || x >= m.width) return 0.0f;
    return m.at(b, c, y, x);
}

}  // namespace

FeatureMap grid_sample_bilinear(const FeatureMap& input, const FeatureMap& offsets) {
    check_offset_shapes(input, offsets);
    FeatureMap out(input.batch, input.channels, input.height, input.width);
    for (int b = 0; b < input.batch; ++b) {
        for (int y = 0; y < input.height; ++y) {
            for (int x = 0; x < input.width; ++x) {
                const double sx = x + static_cast<double>(offsets.at(b, 0, y, x));
                const double sy = y + static_cast<double>(offsets.at(b, 1, y, x));
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const double wx = sx - x0;
                const double wy = sy - y0;
                for (int c = 0; c < input.channels; ++c) {
                    const double v00 = tap(input, b, c, y0, x0);
                    const double v01 = tap(input, b, c, y0, x0 + 1);
                    const double v10 = tap(input, b, c, y0 + 1, x0);
                    const double v11 = tap(input, b, c, y0 + 1, x0 + 1);
                    const double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                     wy * ((1.0 - wx) * v10 + wx * v11);
                    out.at(b, c, y, x) = static_cast<float>(v);
                }
            }
        }
    }
    return out;
}

FeatureMap grid_sample_grad_offsets(const FeatureMap& input, const FeatureMap& offsets,
                                    const FeatureMap& upstream) {
    check_offset_shapes(input, offsets);
    if (!upstream.same_shape(input)) {
        throw ConfigError("grid_sample_grad_offsets: upstream must match input shape");
    }
    FeatureMap grad(offsets.batch, 2, offsets.height, offsets.width);
    for (int b = 0; b < input.batch; ++b) {
        for (int y = 0; y < input.height; ++y) {
            for (int x = 0; x < input.width; ++x) {
                const double sx = x + static_cast<double>(offsets.at(b, 0, y, x));
                const double sy = y + static_cast<double>(offsets.at(b, 1, y, x));
                int x0 = static_cast<int>(std::floor(sx));
                int y0 = static_cast<int>(std::floor(sy));
                double wx = sx - x0;
                double wy = sy - y0;
                // On an exact cell boundary the derivative is one-sided;
                // take it in the left/lower cell.
                if (wx == 0.0) {
                    x0 -= 1;
                    wx = 1.0;
                }
                if (wy == 0.0) {
                    y0 -= 1;
                    wy = 1.0;
                }
                double gu = 0.0;
                double gv = 0.0;
                for (int c = 0; c < input.channels; ++c) {
                    const double up = upstream.at(b, c, y, x);
                    if (up == 0.0) continue;
                    const double v00 = tap(input, b, c, y0, x0);
                    const double v01 = tap(input, b, c, y0, x0 + 1);
                    const double v10 = tap(input, b, c, y0 + 1, x0);
                    const double v11 = tap(input, b, c, y0 + 1, x0 + 1);
                    gu += up * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10));
                    gv += up * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01));
                }
                grad.at(b, 0, y, x) = static_cast<float>(gu);
                grad.at(b, 1, y, x) = static_cast<float>(gv);
            }
        }
    }
    return grad;
}

namespace {

// One box-blur pass along each axis, window renormalized at the borders.
void box_blur_plane(std::vector<double>& plane, std::vector<double>& scratch, int h, int w,
                    int radius) {
    scratch.resize(plane.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            int count = 0;
            for (int dx = -radius; dx <= radius; ++dx) {
                const int xx = x + dx;
                if (xx < 0 || xx >= w) continue;
                acc += plane[static_cast<std::size_t>(y) * w + xx];
                ++count;
            }
            scratch[static_cast<std::size_t>(y) * w + x] = acc / count;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            double acc = 0.0;
            int count = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                acc += scratch[static_cast<std::size_t>(yy) * w + x];
                ++count;
            }
            plane[static_cast<std::size_t>(y) * w + x] = acc / count;
        }
    }
}

}  // namespace

FeatureMap seeded_smooth_field(std::uint64_t seed, int b, int c, int h, int w, int blur_radius,
                               int blur_passes, float mean, float amplitude) {
    FeatureMap out(b, c, h, w);
    Rng rng(seed);
    std::vector<double> plane(static_cast<std::size_t>(h) * w);
    std::vector<double> scratch;
    for (int bb = 0; bb < b; ++bb) {
        for (int cc = 0; cc < c; ++cc) {
            for (auto& v : plane) v = rng.normal();
            for (int pass = 0; pass < blur_passes; ++pass) {
                box_blur_plane(plane, scratch, h, w, blur_radius);
            }
            double sum = 0.0, sum_sq = 0.0;
            for (double v : plane) {
                sum += v;
                sum_sq += v * v;
            }
            const double n = static_cast<double>(plane.size());
            const double mu = sum / n;
            const double sigma = std::sqrt(std::max(sum_sq / n - mu * mu, 0.0));
            const double scale = sigma > 1e-12 ? amplitude / sigma : 0.0;
            for (std::size_t i = 0; i < plane.size(); ++i) {
                out.data[out.index(bb, cc, 0, 0) + i] =
                    static_cast<float>(mean + scale * (plane[i] - mu));
            }
        }
    }
    return out;
}

MseResult mse_loss(const FeatureMap& a, const FeatureMap& b) {
    if (!a.same_shape(b)) {
        throw ConfigError("mse_loss: shape mismatch");
    }
    const double n = static_cast<double>(a.batch) * a.height * a.width;
    MseResult result;
    result.grad_a = FeatureMap(a.batch, a.channels, a.height, a.width);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double diff = static_cast<double>(a.data[i]) - b.data[i];
        acc += diff * diff;
        result.grad_a.data[i] = static_cast<float>(2.0 * diff / n);
    }
    result.loss = acc / n;
    if (!std::isfinite(result.loss)) {
        throw NumericalError("mse_loss: non-finite loss");
    }
    return result;
}

}  // namespace bevalign
