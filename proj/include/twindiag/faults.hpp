#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "twindiag/effects.hpp"

namespace twindiag::faults {

// 20 classes: nominal plus 19 engine faults across five subsystems.
enum class FaultClass : int {
    nominal = 0,
    // cooling (6 baffle subcategories)
    baffle_crack,
    baffle_loose,
    baffle_missing_segment,
    baffle_seal_wear,
    baffle_bent,
    baffle_fastener_failure,
    // lubrication (3)
    rocker_cover_leak,
    engine_seal_loose,
    oil_cooler_maintenance,
    // intake (2)
    intake_gasket_leak,
    intake_manifold_loose,
    // compression (2)
    cylinder_compression,
    cylinder_crack,
    // comprehensive (6)
    engine_failure,
    engine_running_rough,
    engine_overspeed,
    engine_idle_problem,
    in_flight_anomaly,
    engine_requires_maintenance,
};

constexpr int kNumClasses = 20;

const std::vector<FaultClass>& all_classes();
const std::string& to_string(FaultClass fc);
FaultClass fault_class_from_string(const std::string& name);  // throws InputError

struct DegradationModel {
    enum class Kind { exponential_approach, linear, fatigue, threshold_abrupt };
    Kind kind = Kind::linear;
    // exponential_approach
    double s_inf = 1.0;
    double tau = 1.0;
    // linear / fatigue
    double rate = 0.0;
    double s_max = 1.0;
    double k = 0.0;
    double alpha = 1.0;
    // threshold_abrupt
    double damage_rate = 0.0;
    double threshold = 1.0;
    double s_jump = 1.0;

    static DegradationModel exponential(double s_inf, double tau);
    static DegradationModel linear_model(double rate, double s_max);
    static DegradationModel fatigue(double k, double alpha, double s_max);
    static DegradationModel threshold_abrupt(double damage_rate, double threshold, double s_jump);

    // Severity at elapsed time since injection; 0 for dt_since <= 0.
    double severity_at(double dt_since) const;
};

struct FaultStateVar {
    std::string name;
    DegradationModel model;
    double severity = 0.0;
};

// Per-episode fault state: class, injection time, evolving physical state
// variables, and the per-episode modulation parameters drawn from the seed.
struct FaultCondition {
    FaultClass fault_class = FaultClass::nominal;
    double t0 = 0.0;  // injection time, s
    std::uint64_t seed = 0;
    std::vector<FaultStateVar> state;

    double roughness_freq_hz = 0.0;
    std::array<double, 4> roughness_phase{};

    double severity(const std::string& var_name) const;  // throws if unknown
};

FaultCondition make_fault_condition(FaultClass fc, double t0, std::uint64_t seed);

// Advance every state variable to time t per its degradation model.
void evolve(FaultCondition& cond, double t, double dt);

// Map the evolved state to physical effects. prev_throttle_cmd feeds the
// idle-circuit dip, which only engages at low throttle settings.
PhysicalEffects effects_of(const FaultCondition& cond, double t,
                           double prev_throttle_cmd = 1.0);

}  // namespace twindiag::faults
