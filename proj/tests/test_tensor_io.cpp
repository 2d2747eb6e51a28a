#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "bevalign/tensor_io.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bevalign;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("bevalign_io_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("tensor file: round-trips values, dims, and bytes") {
    TempDir tmp;
    Rng rng(5);
    for (int trial = 0; trial < 8; ++trial) {
        Tensor t;
        const int ndim = static_cast<int>(rng.uniform_int(1, 5));
        std::uint64_t count = 1;
        for (int d = 0; d < ndim; ++d) {
            t.dims.push_back(static_cast<std::uint64_t>(rng.uniform_int(1, 6)));
            count *= t.dims.back();
        }
        t.data.resize(count);
        for (auto& v : t.data) v = static_cast<float>(rng.uniform(-100.0, 100.0));

        const std::string path = tmp.file("t" + std::to_string(trial) + ".gbev");
        write_tensor(path, t);
        const Tensor back = read_tensor(path);
        CHECK(back.dims == t.dims);
        CHECK(back.data == t.data);

        // Re-serialization is byte-identical.
        const std::string path2 = tmp.file("t_again.gbev");
        write_tensor(path2, back);
        std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
        std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(b1 == b2);
    }
}

TEST_CASE("tensor file: header layout is pinned") {
    TempDir tmp;
    FeatureMap map(1, 2, 1, 3);
    for (std::size_t i = 0; i < map.data.size(); ++i) map.data[i] = static_cast<float>(i);
    const std::string path = tmp.file("layout.gbev");
    write_feature_map(path, map);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 4 + 4 + 4 + 4 * 8 + 6 * 4);
    CHECK(bytes.substr(0, 4) == "GBEV");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version, little-endian
    CHECK(static_cast<unsigned char>(bytes[8]) == 4);  // ndim
    CHECK(static_cast<unsigned char>(bytes[12]) == 1);   // dim0 = 1
    CHECK(static_cast<unsigned char>(bytes[20]) == 2);   // dim1 = 2
    CHECK(static_cast<unsigned char>(bytes[36]) == 3);   // dim3 = 3
}

TEST_CASE("tensor file: malformed inputs raise I/O errors") {
    TempDir tmp;
    const std::string path = tmp.file("bad.gbev");

    std::ofstream(path, std::ios::binary) << "NOPE";
    CHECK_THROWS_AS(read_tensor(path), IoError);

    FeatureMap map(1, 1, 2, 2, 1.0f);
    write_feature_map(path, map);
    // Truncate the payload.
    std::filesystem::resize_file(path, 20);
    CHECK_THROWS_AS(read_tensor(path), IoError);

    CHECK_THROWS_AS(read_tensor(tmp.file("missing.gbev")), IoError);
}
