#pragma once

#include <cstdint>

#include "twindiag/effects.hpp"

namespace twindiag::sim {

// Unit helpers used across the dynamics core.
constexpr double kFtToM = 0.3048;
constexpr double kKtsToMps = 0.514444;
constexpr double kFpmToMps = 0.3048 / 60.0;
constexpr double kG = 9.80665;
constexpr double kSeaLevelTempK = 288.15;
constexpr double kSeaLevelDensity = 1.225;

struct SimConfig {
    double dt = 0.02;                 // s
    double episode_duration = 300.0;  // s
    double target_altitude = 5000.0;  // ft
    double target_speed = 100.0;      // kts
    double target_heading = 90.0;     // deg
    std::uint64_t seed = 0;

    // C172-class airframe/engine constants, overridable per run.
    double mass_kg = 1043.0;
    double wing_area_m2 = 16.2;
    double cd0 = 0.027;
    double induced_drag_k = 0.054;
    double max_shaft_power_w = 120000.0;
    double prop_efficiency = 0.80;
    double rpm_idle = 600.0;
    double rpm_max = 2700.0;
    double fuel_capacity_kg = 144.0;
    double initial_fuel_kg = 100.0;
    double sfc_kg_per_j = 7.3e-8;

    // RPM first-order lag toward throttle-driven target.
    double rpm_time_constant = 1.5;   // s
    // Vertical-speed response lag toward commanded climb.
    double climb_time_constant = 2.5; // s
    double climb_cmd_limit = 700.0;   // ft/min
    double descent_limit = -1500.0;   // ft/min

    // Autopilot gains (tuned for the station-keeping contract).
    double alt_kp = 4.0;     // ft/min per ft
    double alt_ki = 0.02;
    double alt_int_clamp = 5000.0;
    double spd_kp = 0.02;    // throttle per kt
    double spd_ki = 0.004;
    double spd_int_clamp = 1.0;
    double hdg_kp = 0.8;     // deg/s per deg
    double turn_rate_limit = 3.0;

    double mixture_default = 0.80;

    int steps() const { return static_cast<int>(episode_duration / dt + 0.5); }
};

struct FlightState {
    double t = 0.0;                // s
    double altitude = 0.0;         // ft
    double true_airspeed = 0.0;    // kts
    double heading = 0.0;          // deg
    double climb_rate = 0.0;       // ft/min
    double rpm = 0.0;              // rev/min
    double shaft_power = 0.0;      // W
    double thrust = 0.0;           // N
    double throttle_cmd = 0.0;     // [0,1]
    double mixture_cmd = 0.0;      // [0,1]
    double fuel_remaining = 0.0;   // kg
    double fuel_flow = 0.0;        // kg/s
    double ambient_temp = 0.0;     // K
    double air_density = 0.0;      // kg/m^3
    double climb_cmd = 0.0;        // ft/min, autopilot output
    double turn_rate_cmd = 0.0;    // deg/s, autopilot output
};

struct PidChannel {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    double integrator = 0.0;
    double int_clamp = 0.0;
    double out_min = 0.0;
    double out_max = 0.0;
    double prev_error = 0.0;
    bool has_prev = false;
};

struct AutopilotState {
    PidChannel altitude;  // ft error -> climb-rate command (ft/min)
    PidChannel speed;     // kts error -> throttle command [0,1]
    PidChannel heading;   // deg error -> turn-rate command (deg/s)
};

struct EnginePowerResult {
    double shaft_power = 0.0;  // W
    double rpm_target = 0.0;   // rev/min
    double fuel_flow = 0.0;    // kg/s
};

struct AtmosphereSample {
    double temperature_k = 0.0;
    double density = 0.0;
};

// ISA troposphere: T = 288.15 - 0.0065*h_m, rho = 1.225*(T/288.15)^4.2561.
// Throws on altitude outside [0, 20000] ft.
AtmosphereSample isa_atmosphere(double altitude_ft);

double mixture_efficiency(double mixture_cmd);

// Density-, mixture- and compression-scaled piston power at a throttle
// setting. RPM relaxation toward rpm_target is applied by step().
EnginePowerResult engine_power(double throttle_cmd, double mixture_cmd, double air_density,
                               double throttle_correction,
                               const std::array<double, 4>& per_cylinder_compression,
                               const SimConfig& config);

// One PID update with conditional integration (integrator frozen while the
// output saturates). Returns the saturated command.
double pid_update(PidChannel& ch, double setpoint, double measurement, double dt);

double drag_force(double density, double tas_mps, const SimConfig& config);

// Max steady climb rate (ft/min) allowed by specific excess power.
double specific_excess_power_climb(double shaft_power, double density, double tas_mps,
                                   const SimConfig& config);

// Power setting that balances drag in level flight at the config targets.
double trim_throttle(const SimConfig& config);

// Autopilot state with integrators pre-loaded at the trim point.
AutopilotState make_autopilot(const SimConfig& config);

// Flight state at the cruise trim point for the config targets.
FlightState trim_state(const SimConfig& config);

// Advance one dt: autopilot, engine, energy-based point-mass integration.
// Throws SimulationFault if any state component becomes non-finite.
FlightState step(const FlightState& state, AutopilotState& autopilot, const SimConfig& config,
                 const PhysicalEffects& effects);

}  // namespace twindiag::sim
