#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "bevalign/tensor_io.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

// Built binary path, injected by ctest; these tests are skipped without it.
const char* cli_path() { return std::getenv("BEVALIGN_CLI"); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / "bevalign_cli_test";
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cli: exit codes follow the contract") {
    if (!cli_path()) return;
    TempDir tmp;
    const std::string out = (tmp.path / "run").string();

    CHECK(run_cli("--no-such-flag") == 2);
    CHECK(run_cli("simulate --k-graph 0 --out " + out) == 2);
    CHECK(run_cli("simulate --config /nonexistent.json --out " + out) == 3);
    // Missing artifacts must name the problem and exit 3.
    CHECK(run_cli("localalign-eval --out " + (tmp.path / "empty").string()) == 3);
}

TEST_CASE("cli: simulate writes the declared artifacts") {
    if (!cli_path()) return;
    TempDir tmp;
    const std::string out = (tmp.path / "run").string();
    REQUIRE(run_cli("simulate --seed 3 --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "scene.json"));
    CHECK(fs::exists(fs::path(out) / "rig.json"));
    CHECK(fs::exists(fs::path(out) / "cloud.gbev"));
    CHECK(fs::exists(fs::path(out) / "depth_cam0.gbev"));
    CHECK(fs::exists(fs::path(out) / "depth_cam5.gbev"));
    CHECK(fs::exists(fs::path(out) / "simulate_summary.json"));

    const bevalign::Tensor cloud = bevalign::read_tensor((fs::path(out) / "cloud.gbev").string());
    REQUIRE(cloud.dims.size() == 4);
    CHECK(cloud.dims[0] == 1);
    CHECK(cloud.dims[1] == 3);
    CHECK(cloud.dims[2] == 1);
    CHECK(cloud.dims[3] > 1000);

    // The reported point count is the cloud tensor's N dimension.
    const auto summary =
        nlohmann::json::parse(slurp(fs::path(out) / "simulate_summary.json"));
    CHECK(summary["points"].get<std::uint64_t>() == cloud.dims[3]);
    for (const auto& cam : summary["cameras"]) {
        CHECK(cam["nonzero_fraction"].get<double>() > 0.0);
    }

    // The eval command consumes what simulate produced.
    CHECK(run_cli("localalign-eval --seed 3 --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "localalign_summary.json"));
    CHECK(fs::exists(fs::path(out) / "localalign_metrics.jsonl"));
    CHECK(fs::exists(fs::path(out) / "localalign_sweep.csv"));
}

TEST_CASE("cli: simulate is byte-deterministic per seed") {
    if (!cli_path()) return;
    TempDir tmp;
    const std::string a = (tmp.path / "a").string();
    const std::string b = (tmp.path / "b").string();
    REQUIRE(run_cli("simulate --seed 12 --out " + a) == 0);
    REQUIRE(run_cli("simulate --seed 12 --out " + b) == 0);
    CHECK(slurp(fs::path(a) / "cloud.gbev") == slurp(fs::path(b) / "cloud.gbev"));
    CHECK(slurp(fs::path(a) / "depth_cam2.gbev") == slurp(fs::path(b) / "depth_cam2.gbev"));
    CHECK(slurp(fs::path(a) / "scene.json") == slurp(fs::path(b) / "scene.json"));

    const std::string c = (tmp.path / "c").string();
    REQUIRE(run_cli("simulate --seed 13 --out " + c) == 0);
    CHECK(slurp(fs::path(a) / "cloud.gbev") != slurp(fs::path(c) / "cloud.gbev"));
}

TEST_CASE("cli: bench covers all five stages and the kNN scaling sweep") {
    if (!cli_path()) return;
    TempDir tmp;
    const std::string out = (tmp.path / "run").string();
    REQUIRE(run_cli("bench --seed 5 --out " + out) == 0);

    const auto j = nlohmann::json::parse(slurp(fs::path(out) / "bench.json"));
    for (const char* stage :
         {"projection", "knn_build_query", "dual_depthnet", "bev_pool", "optimize"}) {
        REQUIRE(j["stages_ms"].contains(stage));
        CHECK(j["stages_ms"][stage].get<double>() > 0.0);
    }
    REQUIRE(j["repetitions"].get<int>() >= 5);

    const auto scaling = j["knn_scaling"];
    REQUIRE(scaling.size() == 3);
    CHECK(scaling[0]["n"] == 1000);
    CHECK(scaling[2]["n"] == 100000);
    CHECK(scaling[1]["ratio"].get<double>() < scaling[0]["ratio"].get<double>());
    CHECK(scaling[2]["ratio"].get<double>() < scaling[1]["ratio"].get<double>());
}

TEST_CASE("cli: neighbor tables dump as JSON on request") {
    if (!cli_path()) return;
    TempDir tmp;
    const std::string out = (tmp.path / "run").string();
    REQUIRE(run_cli("simulate --seed 4 --out " + out) == 0);
    REQUIRE(run_cli("localalign-eval --seed 4 --dump-neighbors --out " + out) == 0);
    const std::string dump = slurp(fs::path(out) / "neighbors_cam0.json");
    CHECK(dump.find("\"k\":8") != std::string::npos);
    CHECK(dump.find("\"neighbors\"") != std::string::npos);
}
