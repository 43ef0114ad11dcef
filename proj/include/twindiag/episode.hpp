#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>

#include "twindiag/faults.hpp"
#include "twindiag/sensors.hpp"
#include "twindiag/simcore.hpp"

namespace twindiag::data {

// One full trajectory: frames are (27 channels) x (steps), channel rows in
// canonical order, one column per 0.02 s step.
struct EpisodeRecord {
    std::string run_id;
    faults::FaultClass fault_class = faults::FaultClass::nominal;
    std::uint64_t seed = 0;
    double target_altitude = 0.0;
    double target_speed = 0.0;
    double target_heading = 0.0;
    double t0 = 0.0;
    std::string mirror_run_id;
    Eigen::MatrixXf frames;

    int steps() const { return static_cast<int>(frames.cols()); }
    int t0_index(double dt = 0.02) const { return static_cast<int>(t0 / dt + 0.5); }
};

// Closed-loop simulation with the fault engine attached. Nominal episodes run
// the same code path with an inert engine, which is what makes mirrors
// bitwise-identical. fault_enabled=false turns any class into its mirror.
EpisodeRecord run_episode(const sim::SimConfig& config, faults::FaultClass fc, double t0,
                          const std::string& run_id, bool fault_enabled = true);

// Runs the episode and its nominal mirror with identical seed and targets.
std::pair<EpisodeRecord, EpisodeRecord> run_paired(const sim::SimConfig& config,
                                                   faults::FaultClass fc, double t0,
                                                   const std::string& run_id);

}  // namespace twindiag::data
