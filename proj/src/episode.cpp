#include "twindiag/episode.hpp"

#include "twindiag/errors.hpp"
#include "twindiag/rng.hpp"

namespace twindiag::data {

EpisodeRecord run_episode(const sim::SimConfig& config, faults::FaultClass fc, double t0,
                          const std::string& run_id, bool fault_enabled) {
    EpisodeRecord rec;
    rec.run_id = run_id;
    rec.fault_class = fault_enabled ? fc : faults::FaultClass::nominal;
    rec.seed = config.seed;
    rec.target_altitude = config.target_altitude;
    rec.target_speed = config.target_speed;
    rec.target_heading = config.target_heading;
    rec.t0 = t0;

    const std::uint64_t noise_seed = hash_combine(config.seed, 1);
    const std::uint64_t airframe_seed = hash_combine(config.seed, 2);
    const std::uint64_t fault_seed = hash_combine(config.seed, 3);

    const auto calib = sensors::SensorCalibration::for_airframe(airframe_seed);
    auto state = sim::trim_state(config);
    auto autopilot = sim::make_autopilot(config);
    auto thermal = sensors::thermal_equilibrium(state, PhysicalEffects::identity(), calib);

    auto cond = faults::make_fault_condition(fault_enabled ? fc : faults::FaultClass::nominal,
                                             t0, fault_seed);

    const int steps = config.steps();
    rec.frames.resize(kNumChannels, steps);

    try {
        for (int i = 0; i < steps; ++i) {
            const double t = i * config.dt;
            faults::evolve(cond, t, config.dt);
            const auto effects = faults::effects_of(cond, t, state.throttle_cmd);
            state = sim::step(state, autopilot, config, effects);
            const auto frame =
                sensors::synthesize(state, effects, thermal, calib, noise_seed, i, config.dt);
            for (int c = 0; c < kNumChannels; ++c)
                rec.frames(c, i) = static_cast<float>(frame[static_cast<std::size_t>(c)]);
        }
    } catch (const SimulationFault& e) {
        throw SimulationFault(std::string(e.what()) + " [run_id=" + run_id + "]");
    }
    return rec;
}

std::pair<EpisodeRecord, EpisodeRecord> run_paired(const sim::SimConfig& config,
                                                   faults::FaultClass fc, double t0,
                                                   const std::string& run_id) {
    auto episode = run_episode(config, fc, t0, run_id, true);
    auto mirror = run_episode(config, fc, t0, run_id + "m", false);
    episode.mirror_run_id = mirror.run_id;
    mirror.mirror_run_id = mirror.run_id;  // a nominal trajectory is its own baseline
    return {std::move(episode), std::move(mirror)};
}

}  // namespace twindiag::data
