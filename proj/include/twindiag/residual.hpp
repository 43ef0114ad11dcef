#pragma once

#include "twindiag/dataset.hpp"
#include "twindiag/surrogate.hpp"

namespace twindiag::residual {

enum class FeatureMode { mirror, surrogate, raw, diff };
enum class ChannelConfig { concat46, residual23, raw23 };

const std::string& to_string(FeatureMode m);
const std::string& to_string(ChannelConfig c);
FeatureMode feature_mode_from_string(const std::string& s);
ChannelConfig channel_config_from_string(const std::string& s);

constexpr int kWindowSteps = 1500;          // 30 s at 50 Hz
constexpr double kEffectiveWindowS = 120.0; // residuals trusted this long past t0

// Timestep-wise observation minus mirror over the 23 monitored channels.
Eigen::MatrixXf mirror_residual(const data::EpisodeRecord& episode,
                                const data::EpisodeRecord& mirror);

// First-order differencing, d[:,0] = 0.
Eigen::MatrixXf simple_diff(const data::EpisodeRecord& episode);

// Centered moving mean, window truncated at the edges. Mean-preserving on
// constant inputs.
Eigen::MatrixXf smooth_moving_mean(const Eigen::MatrixXf& x, int window);

// The three-layer pipeline in its pinned order: (1) divide by
// max(sigma, 1% range), (2) subtract the pre-injection baseline mean over
// [t0 - baseline, t0), (3) sliding-window mean smoothing.
Eigen::MatrixXf normalize_residual(const Eigen::MatrixXf& raw_residual,
                                   const NormalizationCalib& calib, int t0_index, double dt);

struct ResidualWindow {
    std::string run_id;
    int label = 0;  // FaultClass index
    Eigen::MatrixXf features;  // rows x kWindowSteps
};

struct FeatureSet {
    FeatureMode mode = FeatureMode::mirror;
    ChannelConfig config = ChannelConfig::concat46;
    int rows = 0;
    std::vector<ResidualWindow> windows;
};

struct FeatureStats {
    Eigen::VectorXf mean = Eigen::VectorXf::Zero(kNumMonitored);
    Eigen::VectorXf std = Eigen::VectorXf::Ones(kNumMonitored);
};

struct BuiltFeatures {
    FeatureSet train;
    FeatureSet test;
    FeatureStats raw_stats;   // fitted on the train split only
    FeatureStats diff_stats;
};

// Builds classifier inputs for every run in the dataset. Windows are anchored
// at t0. Raw-state and diff channels are standardized with train-split
// statistics; residual channels use the normalization calib (mirror mode uses
// the floor-only calib when none is supplied). surrogate is required iff
// mode == surrogate.
BuiltFeatures build_features(const data::Dataset& dataset, FeatureMode mode, ChannelConfig config,
                             Surrogate* surrogate = nullptr);

void save_features(const std::filesystem::path& path, const BuiltFeatures& f);
BuiltFeatures load_features(const std::filesystem::path& path);

}  // namespace twindiag::residual
