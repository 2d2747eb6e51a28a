#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "bevalign/rng.hpp"
#include "bevalign/tensor.hpp"

namespace testutil {

inline bevalign::FeatureMap random_map(std::uint64_t seed, int b, int c, int h, int w,
                                       float lo = -1.0f, float hi = 1.0f) {
    bevalign::FeatureMap map(b, c, h, w);
    bevalign::Rng rng(seed);
    for (auto& v : map.data) {
        v = static_cast<float>(rng.uniform(lo, hi));
    }
    return map;
}

// Gradient-check error metric: |a - n| / max(1, |a|, |n|). Matches the usual
// checker convention so near-zero entries compare absolutely.
inline double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

inline float max_abs_diff(const bevalign::FeatureMap& a, const bevalign::FeatureMap& b) {
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

// Fully randomized CBR parameters (weights, bias, BN statistics).
inline bevalign::CbrBlock random_block(std::uint64_t seed, int in_ch, int out_ch, int kernel,
                                       int stride, int padding) {
    bevalign::CbrBlock block =
        bevalign::CbrBlock::seeded(seed, in_ch, out_ch, kernel, stride, padding);
    bevalign::Rng rng(seed ^ 0xb10c);
    for (auto& w : block.weights) w = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : block.bias) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    for (auto& v : block.bn_gamma) v = static_cast<float>(rng.uniform(0.5, 1.5));
    for (auto& v : block.bn_beta) v = static_cast<float>(rng.uniform(-0.3, 0.3));
    for (auto& v : block.bn_mean) v = static_cast<float>(rng.uniform(-0.3, 0.3));
    for (auto& v : block.bn_var) v = static_cast<float>(rng.uniform(0.5, 2.0));
    return block;
}

// Scatter-style reference convolution: walks input pixels and distributes
// them into every output they touch. Different algorithm path than the
// library's gather loop, same mathematical definition.
inline bevalign::FeatureMap conv_reference(const bevalign::FeatureMap& input,
                                           const bevalign::CbrBlock& block) {
    const int oh = block.out_height(input.height);
    const int ow = block.out_width(input.width);
    bevalign::FeatureMap out(input.batch, block.out_channels, oh, ow);
    for (int b = 0; b < input.batch; ++b) {
        for (int oc = 0; oc < block.out_channels; ++oc) {
            for (int i = 0; i < oh * ow; ++i) {
                out.data[out.index(b, oc, i / ow, i % ow)] = block.bias[oc];
            }
        }
    }
    for (int b = 0; b < input.batch; ++b) {
        for (int ic = 0; ic < block.in_channels; ++ic) {
            for (int iy = 0; iy < input.height; ++iy) {
                for (int ix = 0; ix < input.width; ++ix) {
                    const float value = input.at(b, ic, iy, ix);
                    for (int ky = 0; ky < block.kernel_h; ++ky) {
                        const int num_y = iy + block.padding - ky;
                        if (num_y < 0 || num_y % block.stride != 0) continue;
                        const int oy = num_y / block.stride;
                        if (oy >= oh) continue;
                        for (int kx = 0; kx < block.kernel_w; ++kx) {
                            const int num_x = ix + block.padding - kx;
                            if (num_x < 0 || num_x % block.stride != 0) continue;
                            const int ox = num_x / block.stride;
                            if (ox >= ow) continue;
                            for (int oc = 0; oc < block.out_channels; ++oc) {
                                const std::size_t widx =
                                    ((static_cast<std::size_t>(oc) * block.in_channels + ic) *
                                         block.kernel_h +
                                     ky) *
                                        block.kernel_w +
                                    kx;
                                out.at(b, oc, oy, ox) += block.weights[widx] * value;
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

inline bevalign::FeatureMap cbr_reference(const bevalign::FeatureMap& input,
                                          const bevalign::CbrBlock& block) {
    bevalign::FeatureMap out = conv_reference(input, block);
    for (int b = 0; b < out.batch; ++b) {
        for (int c = 0; c < out.channels; ++c) {
            for (int y = 0; y < out.height; ++y) {
                for (int x = 0; x < out.width; ++x) {
                    float& v = out.at(b, c, y, x);
                    v = (v - block.bn_mean[c]) /
                            std::sqrt(block.bn_var[c] + block.bn_epsilon) * block.bn_gamma[c] +
                        block.bn_beta[c];
                    v = std::max(0.0f, v);
                }
            }
        }
    }
    return out;
}

}  // namespace testutil
