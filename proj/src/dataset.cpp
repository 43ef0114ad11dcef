#include "twindiag/dataset.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "twindiag/channels.hpp"
#include "twindiag/errors.hpp"
#include "twindiag/rng.hpp"

namespace twindiag::data {

using nlohmann::json;
namespace fs = std::filesystem;

const std::string& to_string(Split s) {
    static const std::vector<std::string> names = {"train", "test"};
    return names.at(static_cast<std::size_t>(s));
}

void write_frames_csv(const fs::path& path, const Eigen::MatrixXf& frames) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path.string());

    std::string line;
    const auto& table = canonical_channels();
    for (std::size_t c = 0; c < table.size(); ++c) {
        if (c) line += ',';
        line += table[c].name;
    }
    line += '\n';
    std::fwrite(line.data(), 1, line.size(), f);

    char buf[64];
    line.clear();
    for (int t = 0; t < frames.cols(); ++t) {
        line.clear();
        for (int c = 0; c < frames.rows(); ++c) {
            if (c) line += ',';
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, frames(c, t));
            line.append(buf, p);
        }
        line += '\n';
        std::fwrite(line.data(), 1, line.size(), f);
    }
    std::fclose(f);
}

Eigen::MatrixXf read_frames_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string header;
    std::getline(in, header);

    std::vector<float> values;
    values.reserve(1 << 20);
    std::string row;
    int cols = 0;
    while (std::getline(in, row)) {
        if (row.empty()) continue;
        const char* p = row.data();
        const char* end = p + row.size();
        int n = 0;
        while (p < end) {
            float v;
            auto [np, ec] = std::from_chars(p, end, v);
            if (ec != std::errc())
                throw SchemaError("bad float in " + path.string());
            values.push_back(v);
            ++n;
            p = np;
            if (p < end && *p == ',') ++p;
        }
        if (cols == 0)
            cols = n;
        else if (n != cols)
            throw SchemaError("ragged csv row in " + path.string());
    }
    if (cols != kNumChannels)
        throw SchemaError("csv channel count mismatch in " + path.string());
    const int steps = static_cast<int>(values.size()) / cols;
    Eigen::MatrixXf frames(kNumChannels, steps);
    for (int t = 0; t < steps; ++t)
        for (int c = 0; c < kNumChannels; ++c)
            frames(c, t) = values[static_cast<std::size_t>(t) * cols + c];
    return frames;
}

void write_frames_bin(const fs::path& path, const Eigen::MatrixXf& frames) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path.string());
    const json header = {{"magic", "TDRUN1"},
                         {"dtype", "f32le"},
                         {"layout", "step_major"},
                         {"channels", kNumChannels},
                         {"steps", frames.cols()}};
    out << header.dump() << '\n';
    // Column-major (channels x steps) storage is exactly step-major on disk.
    out.write(reinterpret_cast<const char*>(frames.data()),
              static_cast<std::streamsize>(sizeof(float) * frames.size()));
    if (!out) throw IoError("short write: " + path.string());
}

Eigen::MatrixXf read_frames_bin(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string header_line;
    std::getline(in, header_line);
    const json header = json::parse(header_line, nullptr, false);
    if (header.is_discarded() || header.value("magic", "") != "TDRUN1")
        throw SchemaError("not a TDRUN1 file: " + path.string());
    const int channels = header.at("channels").get<int>();
    const int steps = header.at("steps").get<int>();
    if (channels != kNumChannels)
        throw SchemaError("bin channel count mismatch in " + path.string());
    Eigen::MatrixXf frames(channels, steps);
    in.read(reinterpret_cast<char*>(frames.data()),
            static_cast<std::streamsize>(sizeof(float) * frames.size()));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * frames.size()))
        throw SchemaError("truncated bin file: " + path.string());
    return frames;
}

std::uint64_t fnv1a64_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        const auto n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

namespace {

json gen_config_to_json(const GenConfig& c) {
    std::vector<std::string> class_names;
    for (auto fc : c.classes) class_names.push_back(faults::to_string(fc));
    return json{{"runs_per_class", c.runs_per_class},
                {"classes", class_names},
                {"seed", c.seed},
                {"format", c.format},
                {"episode_duration", c.episode_duration},
                {"injection_min", c.injection_min},
                {"injection_max", c.injection_max}};
}

GenConfig gen_config_from_json(const json& j) {
    GenConfig c;
    c.runs_per_class = j.at("runs_per_class").get<int>();
    for (const auto& name : j.at("classes"))
        c.classes.push_back(faults::fault_class_from_string(name.get<std::string>()));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.format = j.at("format").get<std::string>();
    c.episode_duration = j.at("episode_duration").get<double>();
    c.injection_min = j.at("injection_min").get<double>();
    c.injection_max = j.at("injection_max").get<double>();
    return c;
}

struct PlannedRun {
    RunMeta meta;
    sim::SimConfig sim_config;
};

}  // namespace

void write_manifest(const fs::path& dir, const DatasetManifest& manifest) {
    json runs = json::array();
    for (const auto& r : manifest.runs) {
        runs.push_back({{"run_id", r.run_id},
                        {"fault_class", faults::to_string(r.fault_class)},
                        {"split", to_string(r.split)},
                        {"seed", r.seed},
                        {"t0", r.t0},
                        {"target_altitude", r.target_altitude},
                        {"target_speed", r.target_speed},
                        {"target_heading", r.target_heading},
                        {"mirror_run_id", r.mirror_run_id},
                        {"csv_path", r.csv_path},
                        {"bin_path", r.bin_path},
                        {"checksum", r.checksum},
                        {"mirror_checksum", r.mirror_checksum}});
    }
    json channels = json::array();
    for (const auto& d : canonical_channels())
        channels.push_back({{"name", d.name},
                            {"unit", d.unit},
                            {"group", d.group},
                            {"noise_sigma", d.noise_sigma},
                            {"range_min", d.range_min},
                            {"range_max", d.range_max},
                            {"monitored", d.monitored}});
    const json doc = {{"magic", "TDSET1"},
                      {"dataset_id", manifest.dataset_id},
                      {"channels", channels},
                      {"config", gen_config_to_json(manifest.config)},
                      {"runs", runs}};
    std::ofstream out(dir / "manifest.json");
    out << doc.dump(1) << '\n';
    if (!out) throw IoError("cannot write manifest in " + dir.string());
}

DatasetManifest read_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no manifest.json in " + dir.string());
    json doc;
    in >> doc;
    if (doc.value("magic", "") != "TDSET1")
        throw SchemaError("not a dataset manifest: " + (dir / "manifest.json").string());

    DatasetManifest m;
    m.dataset_id = doc.at("dataset_id").get<std::string>();
    for (const auto& c : doc.at("channels"))
        m.channel_names.push_back(c.at("name").get<std::string>());
    m.config = gen_config_from_json(doc.at("config"));
    for (const auto& r : doc.at("runs")) {
        RunMeta meta;
        meta.run_id = r.at("run_id").get<std::string>();
        meta.fault_class = faults::fault_class_from_string(r.at("fault_class").get<std::string>());
        meta.split = r.at("split").get<std::string>() == "train" ? Split::train : Split::test;
        meta.seed = r.at("seed").get<std::uint64_t>();
        meta.t0 = r.at("t0").get<double>();
        meta.target_altitude = r.at("target_altitude").get<double>();
        meta.target_speed = r.at("target_speed").get<double>();
        meta.target_heading = r.at("target_heading").get<double>();
        meta.mirror_run_id = r.at("mirror_run_id").get<std::string>();
        meta.csv_path = r.at("csv_path").get<std::string>();
        meta.bin_path = r.at("bin_path").get<std::string>();
        meta.checksum = r.at("checksum").get<std::uint64_t>();
        meta.mirror_checksum = r.at("mirror_checksum").get<std::uint64_t>();
        m.runs.push_back(std::move(meta));
    }

    const auto& canonical = canonical_channels();
    if (m.channel_names.size() != canonical.size())
        throw SchemaError("manifest channel list does not match canonical channels");
    for (std::size_t i = 0; i < canonical.size(); ++i)
        if (m.channel_names[i] != canonical[i].name)
            throw SchemaError("manifest channel order mismatch at index " + std::to_string(i) +
                              ": " + m.channel_names[i]);
    return m;
}

DatasetManifest generate_dataset(const GenConfig& config_in) {
    GenConfig config = config_in;
    if (config.classes.empty()) config.classes = faults::all_classes();
    if (config.runs_per_class <= 0) throw InputError("runs_per_class must be positive");
    if (config.format != "csv" && config.format != "bin" && config.format != "both")
        throw InputError("format must be csv, bin or both");
    if (config.injection_min + 30.0 > config.episode_duration)
        throw InputError("injection window does not fit the episode duration");

    if (fs::exists(config.out_dir))
        throw InputError("output directory already exists: " + config.out_dir.string());
    fs::create_directories(config.out_dir / "runs");

    try {
        // Plan all runs up front: seeds, targets, t0 and splits are derived
        // from the dataset seed, never from execution order.
        std::vector<PlannedRun> plan;
        const double snap = 0.02;
        for (std::size_t ci = 0; ci < config.classes.size(); ++ci) {
            const auto fc = config.classes[ci];
            const int n = config.runs_per_class;
            const int n_test = static_cast<int>(0.3 * n);  // floor; train gets the rest

            std::vector<int> order(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
            Rng split_rng(hash_combine(config.seed, 0x5117ULL + ci));
            split_rng.shuffle(order);

            std::vector<Split> split_of(static_cast<std::size_t>(n), Split::train);
            for (int i = 0; i < n_test; ++i)
                split_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
                    Split::test;

            for (int run = 0; run < n; ++run) {
                PlannedRun p;
                p.meta.run_id = faults::to_string(fc) + "_" + std::to_string(run);
                p.meta.fault_class = fc;
                p.meta.split = split_of[static_cast<std::size_t>(run)];
                p.meta.seed = hash_combine(hash_combine(config.seed, 0xEE0 + ci),
                                           static_cast<std::uint64_t>(run));
                Rng rng(hash_combine(p.meta.seed, 4));
                p.meta.target_altitude = rng.uniform(4500.0, 5500.0);
                p.meta.target_speed = rng.uniform(90.0, 110.0);
                p.meta.target_heading = rng.uniform(0.0, 360.0);
                // Nominal runs get a pseudo-t0 from the same distribution so
                // the windowing logic is class-agnostic.
                const double t0_raw = rng.uniform(config.injection_min, config.injection_max);
                p.meta.t0 = std::round(t0_raw / snap) * snap;
                p.meta.mirror_run_id = p.meta.run_id + "m";

                p.sim_config.seed = p.meta.seed;
                p.sim_config.episode_duration = config.episode_duration;
                p.sim_config.target_altitude = p.meta.target_altitude;
                p.sim_config.target_speed = p.meta.target_speed;
                p.sim_config.target_heading = p.meta.target_heading;
                plan.push_back(std::move(p));
            }
        }

        const bool write_csv = config.format == "csv" || config.format == "both";
        const bool write_bin = config.format == "bin" || config.format == "both";

        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::string first_error;

        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= plan.size()) return;
                auto& p = plan[i];
                try {
                    auto [episode, mirror] =
                        run_paired(p.sim_config, p.meta.fault_class, p.meta.t0, p.meta.run_id);
                    for (const auto* rec : {&episode, &mirror}) {
                        if (write_csv)
                            write_frames_csv(config.out_dir / "runs" / (rec->run_id + ".csv"),
                                             rec->frames);
                        if (write_bin)
                            write_frames_bin(config.out_dir / "runs" / (rec->run_id + ".bin"),
                                             rec->frames);
                    }
                    const std::string ext = write_bin ? ".bin" : ".csv";
                    if (write_csv) p.meta.csv_path = "runs/" + p.meta.run_id + ".csv";
                    if (write_bin) p.meta.bin_path = "runs/" + p.meta.run_id + ".bin";
                    p.meta.checksum = fnv1a64_file(config.out_dir / "runs" / (p.meta.run_id + ext));
                    p.meta.mirror_checksum =
                        fnv1a64_file(config.out_dir / "runs" / (p.meta.mirror_run_id + ext));
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (first_error.empty()) first_error = e.what();
                    return;
                }
            }
        };

        const int jobs = std::max(config.jobs, 1);
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs - 1; ++j) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
        if (!first_error.empty()) throw IoError(first_error);

        DatasetManifest manifest;
        manifest.dataset_id = "twindiag-" + std::to_string(config.seed);
        for (const auto& d : canonical_channels()) manifest.channel_names.push_back(d.name);
        manifest.config = config;
        for (auto& p : plan) manifest.runs.push_back(std::move(p.meta));
        write_manifest(config.out_dir, manifest);
        return manifest;
    } catch (...) {
        fs::remove_all(config.out_dir);
        throw;
    }
}

Dataset::Dataset(fs::path dir) : dir_(std::move(dir)), manifest_(read_manifest(dir_)) {
    for (std::size_t i = 0; i < manifest_.runs.size(); ++i)
        index_[manifest_.runs[i].run_id] = i;
}

const RunMeta& Dataset::run(const std::string& run_id) const {
    const auto it = index_.find(run_id);
    if (it == index_.end()) throw InputError("unknown run_id: " + run_id);
    return manifest_.runs[it->second];
}

std::vector<const RunMeta*> Dataset::runs_in(Split split) const {
    std::vector<const RunMeta*> out;
    for (const auto& r : manifest_.runs)
        if (r.split == split) out.push_back(&r);
    return out;
}

fs::path Dataset::frames_path(const std::string& run_id) const {
    const fs::path bin = dir_ / "runs" / (run_id + ".bin");
    if (fs::exists(bin)) return bin;
    const fs::path csv = dir_ / "runs" / (run_id + ".csv");
    if (fs::exists(csv)) return csv;
    throw IoError("no frames file for run_id " + run_id + " in " + dir_.string());
}

EpisodeRecord Dataset::load(const std::string& run_id) const {
    const bool is_mirror = !run_id.empty() && run_id.back() == 'm';
    const std::string base = is_mirror ? run_id.substr(0, run_id.size() - 1) : run_id;
    const RunMeta& meta = run(base);

    EpisodeRecord rec;
    rec.run_id = run_id;
    rec.fault_class = is_mirror ? faults::FaultClass::nominal : meta.fault_class;
    rec.seed = meta.seed;
    rec.t0 = meta.t0;
    rec.target_altitude = meta.target_altitude;
    rec.target_speed = meta.target_speed;
    rec.target_heading = meta.target_heading;
    rec.mirror_run_id = is_mirror ? run_id : meta.mirror_run_id;

    const auto path = frames_path(run_id);
    rec.frames = path.extension() == ".bin" ? read_frames_bin(path) : read_frames_csv(path);
    return rec;
}

EpisodeRecord Dataset::load_mirror(const RunMeta& meta) const { return load(meta.mirror_run_id); }

Dataset load_dataset(const fs::path& dir) { return Dataset(dir); }

}  // namespace twindiag::data
