#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevalign/tensor.hpp"

namespace bevalign {

// GBEV tensor container: magic "GBEV", little-endian u32 version=1, u32 ndim,
// ndim x u64 dims, then row-major little-endian f32 payload.
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> data;
};

void write_tensor(const std::string& path, const Tensor& tensor);
Tensor read_tensor(const std::string& path);

void write_feature_map(const std::string& path, const FeatureMap& map);
FeatureMap read_feature_map(const std::string& path);

}  // namespace bevalign
