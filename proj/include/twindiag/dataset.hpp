#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twindiag/episode.hpp"

namespace twindiag::data {

enum class Split { train, test };
const std::string& to_string(Split s);

struct GenConfig {
    std::filesystem::path out_dir;
    std::vector<faults::FaultClass> classes;  // empty = all 20
    int runs_per_class = 80;
    std::uint64_t seed = 0;
    std::string format = "csv";  // csv | bin | both
    double episode_duration = 300.0;
    double injection_min = 60.0;   // s
    double injection_max = 150.0;  // s
    int jobs = 1;
};

struct RunMeta {
    std::string run_id;
    faults::FaultClass fault_class = faults::FaultClass::nominal;
    Split split = Split::train;
    std::uint64_t seed = 0;
    double t0 = 0.0;
    double target_altitude = 0.0;
    double target_speed = 0.0;
    double target_heading = 0.0;
    std::string mirror_run_id;
    std::string csv_path;  // relative to dataset dir; empty if not written
    std::string bin_path;
    std::uint64_t checksum = 0;         // of the preferred (bin else csv) file
    std::uint64_t mirror_checksum = 0;
};

struct DatasetManifest {
    std::string dataset_id;
    std::vector<std::string> channel_names;  // must equal canonical order
    std::vector<RunMeta> runs;               // episodes; mirrors referenced via mirror_run_id
    GenConfig config;
};

// Frame file IO. CSV: channel-name header then one row per step, shortest
// round-trip decimal floats. BIN: one JSON header line then raw little-endian
// float32, step-major.
void write_frames_csv(const std::filesystem::path& path, const Eigen::MatrixXf& frames);
Eigen::MatrixXf read_frames_csv(const std::filesystem::path& path);
void write_frames_bin(const std::filesystem::path& path, const Eigen::MatrixXf& frames);
Eigen::MatrixXf read_frames_bin(const std::filesystem::path& path);

std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// Runs every episode plus its nominal mirror, writes runs/<id>.{csv,bin} and
// manifest.json. The output directory must not already exist; partial output
// is removed on failure. Deterministic for a given config.
DatasetManifest generate_dataset(const GenConfig& config);

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

// Lazy dataset handle: metadata eager, frames loaded per run on demand.
class Dataset {
public:
    explicit Dataset(std::filesystem::path dir);

    const DatasetManifest& manifest() const { return manifest_; }
    const std::vector<RunMeta>& runs() const { return manifest_.runs; }
    const RunMeta& run(const std::string& run_id) const;
    std::vector<const RunMeta*> runs_in(Split split) const;

    // Loads episode frames (and metadata) for an episode or mirror run id.
    EpisodeRecord load(const std::string& run_id) const;
    EpisodeRecord load_mirror(const RunMeta& meta) const;

    double dt() const { return 0.02; }

private:
    std::filesystem::path frames_path(const std::string& run_id) const;

    std::filesystem::path dir_;
    DatasetManifest manifest_;
    std::map<std::string, std::size_t> index_;
};

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace twindiag::data
