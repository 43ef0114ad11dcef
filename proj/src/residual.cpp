#include "twindiag/residual.hpp"

#include <fstream>

#include "twindiag/errors.hpp"

namespace twindiag::residual {

const std::string& to_string(FeatureMode m) {
    static const std::vector<std::string> names = {"mirror", "surrogate", "raw", "diff"};
    return names.at(static_cast<std::size_t>(m));
}

const std::string& to_string(ChannelConfig c) {
    static const std::vector<std::string> names = {"concat46", "residual23", "raw23"};
    return names.at(static_cast<std::size_t>(c));
}

FeatureMode feature_mode_from_string(const std::string& s) {
    for (auto m : {FeatureMode::mirror, FeatureMode::surrogate, FeatureMode::raw,
                   FeatureMode::diff})
        if (to_string(m) == s) return m;
    throw InputError("unknown feature mode: " + s);
}

ChannelConfig channel_config_from_string(const std::string& s) {
    for (auto c : {ChannelConfig::concat46, ChannelConfig::residual23, ChannelConfig::raw23})
        if (to_string(c) == s) return c;
    throw InputError("unknown channel config: " + s);
}

Eigen::MatrixXf mirror_residual(const data::EpisodeRecord& episode,
                                const data::EpisodeRecord& mirror) {
    if (episode.frames.cols() != mirror.frames.cols() ||
        episode.frames.rows() != mirror.frames.rows())
        throw SchemaError("mirror_residual: geometry mismatch between " + episode.run_id +
                          " and " + mirror.run_id);
    return episode.frames.topRows(kNumMonitored) - mirror.frames.topRows(kNumMonitored);
}

Eigen::MatrixXf simple_diff(const data::EpisodeRecord& episode) {
    const auto obs = episode.frames.topRows(kNumMonitored);
    Eigen::MatrixXf d = Eigen::MatrixXf::Zero(kNumMonitored, obs.cols());
    if (obs.cols() >= 2)
        d.rightCols(obs.cols() - 1) = obs.rightCols(obs.cols() - 1) - obs.leftCols(obs.cols() - 1);
    return d;
}

Eigen::MatrixXf smooth_moving_mean(const Eigen::MatrixXf& x, int window) {
    if (window <= 1) return x;
    const int T = static_cast<int>(x.cols());
    const int half = window / 2;
    // Prefix sums give O(T) per channel.
    Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(x.rows(), T + 1);
    for (int t = 0; t < T; ++t)
        prefix.col(t + 1) = prefix.col(t) + x.col(t).cast<double>();
    Eigen::MatrixXf out(x.rows(), T);
    for (int t = 0; t < T; ++t) {
        const int lo = std::max(0, t - half);
        const int hi = std::min(T - 1, t + half);
        out.col(t) = ((prefix.col(hi + 1) - prefix.col(lo)) / (hi - lo + 1)).cast<float>();
    }
    return out;
}

Eigen::MatrixXf normalize_residual(const Eigen::MatrixXf& raw_residual,
                                   const NormalizationCalib& calib, int t0_index, double dt) {
    const int baseline_steps = static_cast<int>(calib.baseline_seconds / dt + 0.5);
    if (t0_index < baseline_steps)
        throw InputError("normalize_residual: t0 leaves no room for the pre-injection baseline");

    Eigen::MatrixXf z = raw_residual;
    for (int c = 0; c < kNumMonitored; ++c) z.row(c) /= calib.divisor(c);

    const auto baseline =
        z.middleCols(t0_index - baseline_steps, baseline_steps).rowwise().mean();
    z.colwise() -= baseline;

    return smooth_moving_mean(z, calib.smooth_window);
}

namespace {

struct RunWindows {
    std::string run_id;
    int label = 0;
    data::Split split = data::Split::train;
    Eigen::MatrixXf residual;  // 23 x W (meaning depends on mode); empty for raw23
    Eigen::MatrixXf raw;       // 23 x W raw monitored states
};

void accumulate_stats(const Eigen::MatrixXf& w, Eigen::VectorXd& sum, Eigen::VectorXd& sumsq,
                      double& count) {
    sum += w.cast<double>().rowwise().sum();
    sumsq += w.cast<double>().cwiseProduct(w.cast<double>()).rowwise().sum();
    count += static_cast<double>(w.cols());
}

FeatureStats finalize_stats(const Eigen::VectorXd& sum, const Eigen::VectorXd& sumsq,
                            double count) {
    FeatureStats s;
    for (int c = 0; c < kNumMonitored; ++c) {
        const double mean = sum(c) / count;
        const double var = std::max(sumsq(c) / count - mean * mean, 0.0);
        s.mean(c) = static_cast<float>(mean);
        s.std(c) = static_cast<float>(std::max(std::sqrt(var), 1e-5));
    }
    return s;
}

Eigen::MatrixXf standardize(const Eigen::MatrixXf& w, const FeatureStats& stats) {
    return ((w.colwise() - stats.mean).array().colwise() / stats.std.array()).matrix();
}

}  // namespace

BuiltFeatures build_features(const data::Dataset& dataset, FeatureMode mode, ChannelConfig config,
                             Surrogate* surrogate) {
    if (mode == FeatureMode::surrogate && !surrogate)
        throw InputError("build_features: surrogate mode requires a trained surrogate");
    if (mode == FeatureMode::raw && config != ChannelConfig::raw23)
        throw InputError("build_features: raw mode supports only the raw23 config");
    if (mode != FeatureMode::raw && config == ChannelConfig::raw23)
        throw InputError("build_features: raw23 config requires raw mode");

    const double dt = dataset.dt();
    const NormalizationCalib floor_calib;  // sigma = 0: mirror scaling

    std::vector<RunWindows> all;
    all.reserve(dataset.runs().size());

    // Surrogate residuals are computed in batches for GEMM efficiency.
    const auto& runs = dataset.runs();
    const int batch = mode == FeatureMode::surrogate ? 8 : 1;
    for (std::size_t i = 0; i < runs.size(); i += static_cast<std::size_t>(batch)) {
        const std::size_t hi = std::min(runs.size(), i + static_cast<std::size_t>(batch));
        std::vector<data::EpisodeRecord> episodes;
        for (std::size_t j = i; j < hi; ++j) episodes.push_back(dataset.load(runs[j].run_id));

        std::vector<Eigen::MatrixXf> normalized(episodes.size());
        if (mode == FeatureMode::surrogate) {
            int until = 0;
            std::vector<const data::EpisodeRecord*> ptrs;
            for (auto& e : episodes) {
                ptrs.push_back(&e);
                until = std::max(until, e.t0_index(dt) + kWindowSteps);
            }
            auto raws = surrogate_residual_raw_batch(*surrogate, ptrs, until);
            for (std::size_t j = 0; j < episodes.size(); ++j)
                normalized[j] = normalize_residual(raws[j], surrogate->calib,
                                                   episodes[j].t0_index(dt), dt);
        }

        for (std::size_t j = 0; j < episodes.size(); ++j) {
            const auto& meta = runs[i + j];
            const auto& ep = episodes[j];
            const int i0 = ep.t0_index(dt);
            if (i0 + kWindowSteps > ep.steps())
                throw InputError("window exceeds episode length for run " + meta.run_id);

            RunWindows rw;
            rw.run_id = meta.run_id;
            rw.label = static_cast<int>(meta.fault_class);
            rw.split = meta.split;
            rw.raw = ep.frames.block(0, i0, kNumMonitored, kWindowSteps);

            switch (mode) {
                case FeatureMode::mirror: {
                    const auto mirror = dataset.load(meta.mirror_run_id);
                    Eigen::MatrixXf r = mirror_residual(ep, mirror);
                    rw.residual = r.middleCols(i0, kWindowSteps);
                    for (int c = 0; c < kNumMonitored; ++c)
                        rw.residual.row(c) /= floor_calib.divisor(c);
                    break;
                }
                case FeatureMode::surrogate:
                    rw.residual = normalized[j].middleCols(i0, kWindowSteps);
                    break;
                case FeatureMode::diff: {
                    Eigen::MatrixXf d = simple_diff(ep);
                    rw.residual = d.middleCols(i0, kWindowSteps);
                    break;
                }
                case FeatureMode::raw:
                    break;
            }
            all.push_back(std::move(rw));
        }
    }

    // Standardization statistics from the train split only.
    Eigen::VectorXd rsum = Eigen::VectorXd::Zero(kNumMonitored);
    Eigen::VectorXd rsumsq = Eigen::VectorXd::Zero(kNumMonitored);
    Eigen::VectorXd dsum = Eigen::VectorXd::Zero(kNumMonitored);
    Eigen::VectorXd dsumsq = Eigen::VectorXd::Zero(kNumMonitored);
    double rcount = 0.0, dcount = 0.0;
    for (const auto& rw : all) {
        if (rw.split != data::Split::train) continue;
        accumulate_stats(rw.raw, rsum, rsumsq, rcount);
        if (mode == FeatureMode::diff) accumulate_stats(rw.residual, dsum, dsumsq, dcount);
    }

    BuiltFeatures out;
    out.raw_stats = finalize_stats(rsum, rsumsq, rcount);
    if (mode == FeatureMode::diff) out.diff_stats = finalize_stats(dsum, dsumsq, dcount);

    const int rows = config == ChannelConfig::concat46 ? 2 * kNumMonitored : kNumMonitored;
    for (auto set : {&out.train, &out.test}) {
        set->mode = mode;
        set->config = config;
        set->rows = rows;
    }

    for (auto& rw : all) {
        ResidualWindow w;
        w.run_id = rw.run_id;
        w.label = rw.label;
        w.features.resize(rows, kWindowSteps);

        Eigen::MatrixXf residual_part;
        if (mode == FeatureMode::diff)
            residual_part = standardize(rw.residual, out.diff_stats);
        else if (mode != FeatureMode::raw)
            residual_part = rw.residual;

        switch (config) {
            case ChannelConfig::concat46:
                w.features.topRows(kNumMonitored) = residual_part;
                w.features.bottomRows(kNumMonitored) = standardize(rw.raw, out.raw_stats);
                break;
            case ChannelConfig::residual23:
                w.features = residual_part;
                break;
            case ChannelConfig::raw23:
                w.features = standardize(rw.raw, out.raw_stats);
                break;
        }
        (rw.split == data::Split::train ? out.train : out.test).windows.push_back(std::move(w));
    }
    return out;
}

constexpr const char* kFeatureMagic = "TDFEAT1";

void save_features(const std::filesystem::path& path, const BuiltFeatures& f) {
    nlohmann::json sets = nlohmann::json::array();
    for (const auto* set : {&f.train, &f.test}) {
        nlohmann::json windows = nlohmann::json::array();
        for (const auto& w : set->windows)
            windows.push_back({{"run_id", w.run_id}, {"label", w.label}});
        sets.push_back({{"rows", set->rows}, {"windows", windows}});
    }
    auto vec = [](const Eigen::VectorXf& v) {
        return std::vector<float>(v.data(), v.data() + v.size());
    };
    const nlohmann::json header = {{"magic", kFeatureMagic},
                                   {"mode", to_string(f.train.mode)},
                                   {"config", to_string(f.train.config)},
                                   {"window_steps", kWindowSteps},
                                   {"raw_mean", vec(f.raw_stats.mean)},
                                   {"raw_std", vec(f.raw_stats.std)},
                                   {"diff_mean", vec(f.diff_stats.mean)},
                                   {"diff_std", vec(f.diff_stats.std)},
                                   {"sets", sets}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write features: " + path.string());
    out << header.dump() << '\n';
    for (const auto* set : {&f.train, &f.test})
        for (const auto& w : set->windows)
            out.write(reinterpret_cast<const char*>(w.features.data()),
                      static_cast<std::streamsize>(sizeof(float) * w.features.size()));
    if (!out) throw IoError("short feature write: " + path.string());
}

BuiltFeatures load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open features: " + path.string());
    std::string header_line;
    std::getline(in, header_line);
    const auto header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || header.value("magic", "") != kFeatureMagic)
        throw SchemaError("not a feature pack: " + path.string());

    BuiltFeatures f;
    const auto mode = feature_mode_from_string(header.at("mode").get<std::string>());
    const auto config = channel_config_from_string(header.at("config").get<std::string>());
    auto fill = [&](Eigen::VectorXf& v, const char* key) {
        const auto vals = header.at(key).get<std::vector<float>>();
        for (int c = 0; c < kNumMonitored; ++c) v(c) = vals.at(static_cast<std::size_t>(c));
    };
    fill(f.raw_stats.mean, "raw_mean");
    fill(f.raw_stats.std, "raw_std");
    fill(f.diff_stats.mean, "diff_mean");
    fill(f.diff_stats.std, "diff_std");

    FeatureSet* sets[2] = {&f.train, &f.test};
    for (int si = 0; si < 2; ++si) {
        const auto& sj = header.at("sets").at(si);
        sets[si]->mode = mode;
        sets[si]->config = config;
        sets[si]->rows = sj.at("rows").get<int>();
        for (const auto& wj : sj.at("windows")) {
            ResidualWindow w;
            w.run_id = wj.at("run_id").get<std::string>();
            w.label = wj.at("label").get<int>();
            w.features.resize(sets[si]->rows, kWindowSteps);
            in.read(reinterpret_cast<char*>(w.features.data()),
                    static_cast<std::streamsize>(sizeof(float) * w.features.size()));
            if (in.gcount() !=
                static_cast<std::streamsize>(sizeof(float) * w.features.size()))
                throw SchemaError("truncated feature pack: " + path.string());
            sets[si]->windows.push_back(std::move(w));
        }
    }
    return f;
}

}  // namespace twindiag::residual
