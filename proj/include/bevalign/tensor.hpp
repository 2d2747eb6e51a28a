#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bevalign/common.hpp"

namespace bevalign {

// Dense rank-4 float map (batch, channel, height, width), row-major.
// The single feature container of the library: image features, depth maps,
// BEV grids and offset fields all live here.
struct FeatureMap {
    int batch = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    FeatureMap() = default;
    FeatureMap(int b, int c, int h, int w, float fill = 0.0f);

    std::size_t size() const { return data.size(); }

    std::size_t index(int b, int c, int y, int x) const {
        return ((static_cast<std::size_t>(b) * channels + c) * height + y) * width + x;
    }

    float& at(int b, int c, int y, int x) { return data[index(b, c, y, x)]; }
    float at(int b, int c, int y, int x) const { return data[index(b, c, y, x)]; }

    bool same_shape(const FeatureMap& other) const {
        return batch == other.batch && channels == other.channels && height == other.height &&
               width == other.width;
    }

    // Throws NumericalError if any element is NaN or infinite.
    void check_finite(const char* label) const;
};

// Conv + inference-mode BatchNorm + ReLU parameters. BN statistics are fixed;
// nothing in this library trains convolution weights.
struct CbrBlock {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;
    std::vector<float> weights;  // (out, in, kh, kw) row-major
    std::vector<float> bias;     // per out channel
    std::vector<float> bn_gamma;
    std::vector<float> bn_beta;
    std::vector<float> bn_mean;
    std::vector<float> bn_var;
    float bn_epsilon = 1e-5f;

    void validate() const;

    int out_height(int in_height) const {
        return (in_height + 2 * padding - kernel_h) / stride + 1;
    }
    int out_width(int in_width) const { return (in_width + 2 * padding - kernel_w) / stride + 1; }

    // Seeded pseudo-random block with identity BN. 1x1 kernels get
    // orthonormalized rows (sign-fixed toward positive row sums); larger
    // kernels get fan-in scaled Gaussians.
    static CbrBlock seeded(std::uint64_t seed, int in_ch, int out_ch, int kernel, int stride,
                           int padding, float bias_value = 0.05f);

    // 1x1 passthrough (weight 1 on the matching channel, identity BN).
    static CbrBlock identity(int ch);
};

// Cross-correlation with stride/padding; bias added, no activation.
FeatureMap conv2d(const FeatureMap& input, const CbrBlock& block);

// conv2d -> per-channel (x - mean)/sqrt(var + eps) * gamma + beta -> max(0, x).
FeatureMap cbr(const FeatureMap& input, const CbrBlock& block);

struct CbrForward {
    FeatureMap output;
    FeatureMap pre_activation;  // after BN, before ReLU; kept for the backward pass
};

CbrForward cbr_forward_cached(const FeatureMap& input, const CbrBlock& block);

// Gradient of a CBR block w.r.t. its input, given d(loss)/d(output).
FeatureMap cbr_backward_input(const CbrBlock& block, const FeatureMap& pre_activation,
                              const FeatureMap& upstream);

// Per-(b, y, x) softmax over the channel axis, max-subtracted.
FeatureMap softmax_channels(const FeatureMap& input);

// Bilinear resampling of `input` at (x + du, y + dv) per output cell.
// `offsets` is (B, 2, H, W): channel 0 = du (x shift), channel 1 = dv (y shift),
// in output-pixel units. Taps outside [0, W-1] x [0, H-1] read as zero.
FeatureMap grid_sample_bilinear(const FeatureMap& input, const FeatureMap& offsets);

// Analytic d(loss)/d(offsets) for grid_sample_bilinear given
// upstream = d(loss)/d(output). Derivative is taken within the containing
// cell; exactly-on-boundary samples use the left/lower cell.
FeatureMap grid_sample_grad_offsets(const FeatureMap& input, const FeatureMap& offsets,
                                    const FeatureMap& upstream);

struct MseResult {
    double loss = 0.0;
    FeatureMap grad_a;  // d(loss)/d(a) = 2 (a - b) / (B*H*W)
};

// Mean squared difference with divisor B*H*W. The divisor deliberately
// excludes the channel count: channels are summed, batch and space averaged.
// (Indexing "every element" instead would divide by B*C*H*W; this library
// uses the channel-summed convention throughout.)
MseResult mse_loss(const FeatureMap& a, const FeatureMap& b);

// Seeded Gaussian noise pushed through repeated box blurs: band-limited
// random fields with a controllable correlation length, rescaled to the
// requested mean and amplitude (amplitude = one standard deviation).
FeatureMap seeded_smooth_field(std::uint64_t seed, int b, int c, int h, int w, int blur_radius,
                               int blur_passes, float mean, float amplitude);

}  // namespace bevalign
