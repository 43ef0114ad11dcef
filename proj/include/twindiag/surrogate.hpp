#pragma once

#include <filesystem>

#include "twindiag/episode.hpp"
#include "twindiag/nn/train.hpp"

namespace twindiag::residual {

struct SurrogateSpec {
    int input = 27;    // 23 sensors + 4 controls
    int hidden = 256;
    int layers = 2;
    int horizon = 10;  // trains heads for 1..H steps ahead; inference uses 1
};

// Per-channel residual scale for the three-layer normalization: divide by
// max(sigma, 1% of sensor range), debias with the pre-injection mean, smooth.
struct NormalizationCalib {
    Eigen::VectorXf sigma = Eigen::VectorXf::Zero(kNumMonitored);  // raw units
    Eigen::VectorXf floor_;                                        // 1% of range
    int smooth_window = 25;        // steps (0.5 s), centered, edge-truncated
    double baseline_seconds = 30.0;

    NormalizationCalib();
    float divisor(int channel) const {
        return std::max(sigma(channel), floor_(channel));
    }
};

struct SurrogateTrainConfig {
    nn::TrainConfig train{1e-3, 1e-4, 32, 12, 0.5, 3, 1e-5, 6, 0};
    int chunk_steps = 200;
    int max_chunks_per_epoch = 512;  // deterministic rotation through the pool
    double val_fraction = 0.2;       // held-out nominal episodes
};

struct Surrogate {
    SurrogateSpec spec;
    nn::Sequential<float> model;  // gru(27->hidden, layers) + per-step dense head
    Eigen::VectorXf in_mean = Eigen::VectorXf::Zero(kNumChannels);
    Eigen::VectorXf in_std = Eigen::VectorXf::Ones(kNumChannels);
    NormalizationCalib calib;
    double val_mae = 0.0;   // raw units, channel-averaged, held-out nominal
    double val_rmse = 0.0;
};

// Trains on nominal trajectories only; throws InputError if any episode in
// the input carries a fault label (label-leakage guard).
Surrogate train_surrogate(const std::vector<data::EpisodeRecord>& nominal_episodes,
                          const SurrogateSpec& spec, const SurrogateTrainConfig& cfg);

// 1-step-ahead prediction residuals in raw channel units, hidden state warmed
// up from episode start. r[:,0] = 0. until_step < 0 means the whole episode.
Eigen::MatrixXf surrogate_residual_raw(Surrogate& s, const data::EpisodeRecord& episode,
                                       int until_step = -1);

// Batched variant; episodes are processed together for GEMM efficiency.
std::vector<Eigen::MatrixXf> surrogate_residual_raw_batch(
    Surrogate& s, const std::vector<const data::EpisodeRecord*>& episodes, int until_step = -1);

struct SurrogateEval {
    double mae = 0.0;
    double rmse = 0.0;
};

// 1-step error on held-out data, raw units averaged over the 23 channels.
SurrogateEval evaluate_surrogate(Surrogate& s, const std::vector<data::EpisodeRecord>& episodes);

void save_surrogate(Surrogate& s, const std::filesystem::path& path);
Surrogate load_surrogate(const std::filesystem::path& path);

}  // namespace twindiag::residual
