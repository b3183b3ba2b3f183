// Drives the installed command-line binary end to end through std::system.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#ifndef STACKTRACK_CLI_PATH
#error "STACKTRACK_CLI_PATH must point at the built binary"
#endif

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("stacktrack_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(STACKTRACK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_config(const fs::path& path, const fs::path& root, int window = 2) {
    std::ofstream f(path);
    f << R"({
  "seed": 5,
  "pipeline": {"image_size": 32, "patch_size": 8, "window": )"
      << window << R"(, "embed_dim": 16},
  "model": {"layers": 1, "heads": 2, "mlp_ratio": 2, "grid_size": 8, "head_hidden": 8},
  "schedule": {"epochs_per_phase": 1, "patience": 1, "accumulation": 4},
  "synth": {"num_sequences": 2, "frames_per_sequence": 5, "image_size": 32, "seed": 5},
  "paths": {"data_dir": ")"
      << (root / "data").string() << R"(", "out_dir": ")" << (root / "out").string() << R"("}
})";
}

} // namespace

TEST_CASE("synth writes sequences and repeats bytes under one seed") {
    TempDir tmp;
    write_config(tmp.path / "cfg.json", tmp.path);
    REQUIRE(run("synth --config " + (tmp.path / "cfg.json").string()) == 0);
    CHECK(fs::exists(tmp.path / "data" / "seq0000" / "img1" / "000001.ppm"));
    CHECK(fs::exists(tmp.path / "data" / "seq0001" / "gt" / "gt.txt"));

    REQUIRE(run("synth --config " + (tmp.path / "cfg.json").string() + " --out " +
                (tmp.path / "data_b").string()) == 0);
    CHECK(slurp(tmp.path / "data" / "seq0000" / "img1" / "000001.ppm") ==
          slurp(tmp.path / "data_b" / "seq0000" / "img1" / "000001.ppm"));
    CHECK(slurp(tmp.path / "data" / "seq0000" / "gt" / "gt.txt") ==
          slurp(tmp.path / "data_b" / "seq0000" / "gt" / "gt.txt"));
}

TEST_CASE("bad configs and bad paths exit nonzero") {
    TempDir tmp;
    std::ofstream(tmp.path / "bad.json") << "{\"not_a_key\": 1}";
    CHECK(run("synth --config " + (tmp.path / "bad.json").string()) == 1);
    CHECK(run("synth --config " + (tmp.path / "missing.json").string()) != 0);
    // train with a data path that does not exist
    write_config(tmp.path / "cfg.json", tmp.path);
    CHECK(run("train --config " + (tmp.path / "cfg.json").string()) != 0);
}

TEST_CASE("train, track and eval chain") {
    TempDir tmp;
    const std::string cfg = (tmp.path / "cfg.json").string();
    write_config(tmp.path / "cfg.json", tmp.path);
    REQUIRE(run("synth --config " + cfg) == 0);
    REQUIRE(run("train --config " + cfg) == 0);
    CHECK(fs::exists(tmp.path / "out" / "model.ckpt"));
    CHECK(fs::exists(tmp.path / "out" / "train_report.json"));
    const std::string report = slurp(tmp.path / "out" / "train_report.json");
    for (const char* phase : {"heatmap", "dims", "disp", "joint"}) {
        CHECK(report.find(phase) != std::string::npos);
    }
    // per-phase checkpoints
    CHECK(fs::exists(tmp.path / "out" / "checkpoint_heatmap.ckpt"));
    CHECK(fs::exists(tmp.path / "out" / "checkpoint_joint.ckpt"));

    REQUIRE(run("track --config " + cfg + " --checkpoint " +
                (tmp.path / "out" / "model.ckpt").string() + " --sequence " +
                (tmp.path / "data" / "seq0000").string()) == 0);
    CHECK(fs::exists(tmp.path / "out" / "seq0000.txt"));
    const std::string timing = slurp(tmp.path / "out" / "seq0000_timing.json");
    CHECK(timing.find("fps") != std::string::npos);

    // wrong-window config must fail with exit 1
    write_config(tmp.path / "cfg3.json", tmp.path, 3);
    CHECK(run("track --config " + (tmp.path / "cfg3.json").string() + " --checkpoint " +
              (tmp.path / "out" / "model.ckpt").string() + " --sequence " +
              (tmp.path / "data" / "seq0000").string()) == 1);
}

TEST_CASE("no-tmp runs a single phase") {
    TempDir tmp;
    const std::string cfg = (tmp.path / "cfg.json").string();
    write_config(tmp.path / "cfg.json", tmp.path);
    REQUIRE(run("synth --config " + cfg) == 0);
    REQUIRE(run("train --config " + cfg + " --no-tmp") == 0);
    const std::string report = slurp(tmp.path / "out" / "train_report.json");
    CHECK(report.find("joint") != std::string::npos);
    CHECK(report.find("heatmap") == std::string::npos);
}

TEST_CASE("eval against ground truth") {
    TempDir tmp;
    write_config(tmp.path / "cfg.json", tmp.path);
    REQUIRE(run("synth --config " + (tmp.path / "cfg.json").string()) == 0);
    const fs::path gt = tmp.path / "data" / "seq0000" / "gt" / "gt.txt";

    SUBCASE("results equal to ground truth give a perfect score") {
        REQUIRE(run("eval --gt " + gt.string() + " --results " + gt.string() + " --out " +
                    (tmp.path / "out").string()) == 0);
        const std::string json = slurp(tmp.path / "out" / "report.json");
        CHECK(json.find("\"mota\": 1.0") != std::string::npos);
        CHECK(json.find("\"ids\": 0") != std::string::npos);
        for (const char* key : {"mota", "motp", "hota", "idf1", "ids", "fps"}) {
            CHECK(json.find(key) != std::string::npos);
        }
    }
    SUBCASE("empty results miss every object") {
        std::ofstream(tmp.path / "empty.txt").close();
        REQUIRE(run("eval --gt " + gt.string() + " --results " +
                    (tmp.path / "empty.txt").string() + " --out " + (tmp.path / "out").string()) ==
                0);
        const std::string table = slurp(tmp.path / "out" / "report.txt");
        CHECK(table.find("MOTA") != std::string::npos);
        // every ground-truth box missed, no false positives: MOTA lands at 0
        const std::string json = slurp(tmp.path / "out" / "report.json");
        CHECK(json.find("\"mota\": 0.0") != std::string::npos);
        CHECK(json.find("\"fp\": 0") != std::string::npos);
    }
}
