#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "twindiag/dataset.hpp"
#include "twindiag/errors.hpp"
#include "twindiag/rng.hpp"

using namespace twindiag;
using namespace twindiag::data;
namespace fs = std::filesystem;

namespace {

sim::SimConfig short_config(std::uint64_t seed) {
    sim::SimConfig cfg;
    cfg.seed = seed;
    cfg.episode_duration = 80.0;
    return cfg;
}

GenConfig tiny_gen(const fs::path& dir, std::uint64_t seed) {
    GenConfig g;
    g.out_dir = dir;
    g.classes = {faults::FaultClass::nominal, faults::FaultClass::engine_failure};
    g.runs_per_class = 4;
    g.seed = seed;
    g.format = "both";
    g.episode_duration = 80.0;
    g.injection_min = 35.0;
    g.injection_max = 45.0;
    g.jobs = 2;
    return g;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("episode geometry and determinism") {
    auto cfg = short_config(21);
    auto rec = run_episode(cfg, faults::FaultClass::nominal, 40.0, "n0");
    CHECK(rec.steps() == 4000);
    CHECK(rec.frames.rows() == kNumChannels);

    auto again = run_episode(cfg, faults::FaultClass::nominal, 40.0, "n0");
    CHECK(rec.frames == again.frames);
}

TEST_CASE("full-length nominal episode has 15000 frames") {
    sim::SimConfig cfg;
    cfg.seed = 5;
    auto rec = run_episode(cfg, faults::FaultClass::nominal, 100.0, "n300");
    CHECK(rec.steps() == 15000);
}

TEST_CASE("paired mirror coincides exactly before injection") {
    auto cfg = short_config(33);
    auto [episode, mirror] = run_paired(cfg, faults::FaultClass::engine_failure, 40.0, "ef0");
    CHECK(episode.mirror_run_id == "ef0m");

    const int i0 = episode.t0_index(cfg.dt);
    CHECK(i0 == 2000);
    // Bitwise equality through the injection index, divergence afterwards.
    CHECK(episode.frames.leftCols(i0 + 1) == mirror.frames.leftCols(i0 + 1));
    CHECK((episode.frames.rightCols(episode.steps() - i0 - 1).array() !=
           mirror.frames.rightCols(episode.steps() - i0 - 1).array())
              .any());
}

TEST_CASE("nominal mirror is bitwise identical to its episode") {
    auto cfg = short_config(44);
    auto [episode, mirror] = run_paired(cfg, faults::FaultClass::nominal, 40.0, "n1");
    CHECK(episode.frames == mirror.frames);
}

TEST_CASE("csv and bin round-trip frames exactly") {
    Eigen::MatrixXf frames(kNumChannels, 50);
    Rng rng(9);
    for (Eigen::Index i = 0; i < frames.size(); ++i)
        frames.data()[i] = static_cast<float>(rng.normal() * 123.456);

    TempDir dir("twindiag_io_test");
    fs::create_directories(dir.path);

    write_frames_csv(dir.path / "x.csv", frames);
    CHECK(read_frames_csv(dir.path / "x.csv") == frames);

    write_frames_bin(dir.path / "x.bin", frames);
    CHECK(read_frames_bin(dir.path / "x.bin") == frames);

    // Truncated bin is rejected.
    fs::resize_file(dir.path / "x.bin", fs::file_size(dir.path / "x.bin") - 64);
    CHECK_THROWS_AS(read_frames_bin(dir.path / "x.bin"), SchemaError);
}

TEST_CASE("dataset generation: counts, splits, loading") {
    TempDir dir("twindiag_ds_test");
    const auto manifest = generate_dataset(tiny_gen(dir.path, 77));

    CHECK(manifest.runs.size() == 8);
    int train = 0, test = 0;
    std::map<faults::FaultClass, std::pair<int, int>> per_class;
    for (const auto& r : manifest.runs) {
        (r.split == Split::train ? train : test) += 1;
        auto& pc = per_class[r.fault_class];
        (r.split == Split::train ? pc.first : pc.second) += 1;
        CHECK(fs::exists(dir.path / r.csv_path));
        CHECK(fs::exists(dir.path / r.bin_path));
        CHECK(r.mirror_run_id == r.run_id + "m");
    }
    CHECK(train == 6);  // 4 runs: floor(0.3*4)=1 test per class
    CHECK(test == 2);
    for (const auto& [fc, pc] : per_class) {
        CHECK(pc.first == 3);
        CHECK(pc.second == 1);
    }

    auto ds = load_dataset(dir.path);
    CHECK(ds.runs().size() == 8);
    const auto& meta = manifest.runs.front();
    auto episode = ds.load(meta.run_id);
    auto mirror = ds.load_mirror(meta);
    CHECK(episode.steps() == 4000);
    CHECK(mirror.steps() == 4000);
    CHECK(episode.t0 == meta.t0);

    // Loaded frames equal a fresh simulation bitwise.
    auto cfg = short_config(meta.seed);
    cfg.target_altitude = meta.target_altitude;
    cfg.target_speed = meta.target_speed;
    cfg.target_heading = meta.target_heading;
    auto fresh = run_episode(cfg, meta.fault_class, meta.t0, meta.run_id);
    CHECK(episode.frames == fresh.frames);

    CHECK_THROWS_AS(ds.load("no_such_run"), InputError);
}

TEST_CASE("regeneration with the same seed is byte-identical") {
    TempDir a("twindiag_ds_a"), b("twindiag_ds_b");
    auto ga = tiny_gen(a.path, 123);
    auto gb = tiny_gen(b.path, 123);
    ga.jobs = 1;
    gb.jobs = 2;  // parallelism must not affect content
    generate_dataset(ga);
    generate_dataset(gb);

    for (const auto& entry : fs::directory_iterator(a.path / "runs")) {
        const auto rel = entry.path().filename();
        CHECK(fnv1a64_file(entry.path()) == fnv1a64_file(b.path / "runs" / rel));
    }
    std::ifstream ma(a.path / "manifest.json"), mb(b.path / "manifest.json");
    std::string sa((std::istreambuf_iterator<char>(ma)), {});
    std::string sb((std::istreambuf_iterator<char>(mb)), {});
    CHECK(sa == sb);
}

TEST_CASE("existing output directory is refused") {
    TempDir dir("twindiag_ds_exists");
    fs::create_directories(dir.path);
    CHECK_THROWS_AS(generate_dataset(tiny_gen(dir.path, 5)), InputError);
}

TEST_CASE("missing mirror file is reported with the run id") {
    TempDir dir("twindiag_ds_missing");
    auto g = tiny_gen(dir.path, 88);
    g.format = "bin";
    const auto manifest = generate_dataset(g);
    const auto& meta = manifest.runs.front();
    fs::remove(dir.path / ("runs/" + meta.mirror_run_id + ".bin"));

    auto ds = load_dataset(dir.path);
    try {
        ds.load_mirror(meta);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(meta.mirror_run_id) != std::string::npos);
    }
}

TEST_CASE("manifest channel list must match the canonical table") {
    TempDir dir("twindiag_ds_schema");
    auto g = tiny_gen(dir.path, 99);
    g.classes = {faults::FaultClass::nominal};
    g.runs_per_class = 1;
    generate_dataset(g);

    // Corrupt the manifest channel list.
    std::ifstream in(dir.path / "manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = text.find("\"bus_voltage\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 13, "\"bus_volts__\"");
    std::ofstream out(dir.path / "manifest.json");
    out << text;
    out.close();

    CHECK_THROWS_AS(load_dataset(dir.path), SchemaError);
}
