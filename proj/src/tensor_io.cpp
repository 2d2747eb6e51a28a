#include "bevalign/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "bevalign/common.hpp"

namespace bevalign {

namespace {

constexpr char kMagic[4] = {'G', 'B', 'E', 'V'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) {
        if (pos + n > buf.size()) {
            throw IoError(path + ": truncated GBEV file");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

void write_tensor(const std::string& path, const Tensor& tensor) {
    std::uint64_t count = 1;
    for (auto d : tensor.dims) count *= d;
    if (count != tensor.data.size()) {
        throw ConfigError(path + ": tensor dims do not match payload size");
    }
    std::string buf;
    buf.reserve(16 + tensor.dims.size() * 8 + tensor.data.size() * 4);
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put_u64(buf, d);
    for (float v : tensor.data) put_f32(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(path + ": cannot open for writing");
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw IoError(path + ": write failed");
    }
}

Tensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path + ": cannot open for reading");
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw IoError(path + ": not a GBEV tensor file (bad magic)");
    }
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw IoError(path + ": unsupported GBEV version " + std::to_string(version));
    }
    const std::uint32_t ndim = r.u32();
    if (ndim == 0 || ndim > 8) {
        throw IoError(path + ": implausible GBEV rank " + std::to_string(ndim));
    }
    Tensor tensor;
    tensor.dims.resize(ndim);
    std::uint64_t count = 1;
    for (auto& d : tensor.dims) {
        d = r.u64();
        if (d == 0 || count > std::numeric_limits<std::uint64_t>::max() / d) {
            throw IoError(path + ": invalid GBEV dims");
        }
        count *= d;
    }
    r.need(count * 4);
    tensor.data.resize(count);
    for (auto& v : tensor.data) v = r.f32();
    return tensor;
}

void write_feature_map(const std::string& path, const FeatureMap& map) {
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(map.batch), static_cast<std::uint64_t>(map.channels),
              static_cast<std::uint64_t>(map.height), static_cast<std::uint64_t>(map.width)};
    t.data = map.data;
    write_tensor(path, t);
}

FeatureMap read_feature_map(const std::string& path) {
    Tensor t = read_tensor(path);
    if (t.dims.size() != 4) {
        throw IoError(path + ": expected rank-4 tensor, got rank " +
                      std::to_string(t.dims.size()));
    }
    FeatureMap map(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                   static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]));
    map.data = std::move(t.data);
    return map;
}

}  // namespace bevalign
