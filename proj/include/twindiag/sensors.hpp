#pragma once

#include <array>
#include <cstdint>

#include "twindiag/channels.hpp"
#include "twindiag/effects.hpp"
#include "twindiag/simcore.hpp"

namespace twindiag::sensors {

using SensorFrame = std::array<double, kNumChannels>;

// Semi-empirical synthesis constants, calibrated so that nominal cruise at
// the default targets settles near CHT 180 C, EGT 700 C, oil 85 C / 380 kPa.
struct SynthConstants {
    // CHT: equilibrium pulled by per-cylinder power over cooling airflow.
    double cht_gain = 380.0;          // C at reference per-cylinder power
    double cht_tau = 40.0;            // s
    double cht_equilibrium_max = 300.0;
    double p_ref_cyl = 30000.0;       // W, per-cylinder reference power
    double v_ref_kts = 100.0;

    // EGT: combustion temperature, peak at stoichiometric mixture.
    double egt_base = 536.9;          // C
    double egt_power_gain = 500.0;    // C at reference per-cylinder power
    double egt_rich_slope = 450.0;    // C per unit mixture deviation, rich side
    double egt_lean_slope = 700.0;    // lean side
    double mixture_stoich = 0.65;
    double egt_tau = 8.0;             // s

    // Oil thermal balance and viscosity-driven pressure.
    double oil_friction_gain = 86.7;  // C at reference power
    double oil_cooling_rate = 1.0;
    double oil_heat_capacity = 75.0;  // s of thermal inertia
    double p_ref_oil = 60000.0;       // W
    double oil_capacity_kg = 3.5;
    double oil_pump_gain = 548.0;     // kPa at rated rpm, nominal viscosity
    double viscosity_beta = 0.012;    // per C

    // Fuel and electrical.
    double fuel_press_base = 30.0;    // kPa
    double fuel_press_flow_drop = 0.28;  // kPa per kg/h
    double electrical_load_w = 280.0;
    double bus_sag = 0.8;             // V at zero rpm
    double alternator_min_rpm = 1200.0;
};

struct SensorCalibration {
    std::array<double, 4> cht_offset{};  // C, N(0, 3) per airframe
    std::array<double, 4> egt_offset{};  // C, N(0, 8) per airframe
    SynthConstants k;
    bool noise_enabled = true;

    // Offsets drawn once per airframe seed; the mirror shares them.
    static SensorCalibration for_airframe(std::uint64_t airframe_seed);
};

struct ThermalState {
    std::array<double, 4> cht{};  // C
    std::array<double, 4> egt{};  // C
    double oil_temp = 0.0;        // C
};

// Thermal equilibrium for the given flight state and effects; episodes start
// settled at the trim point.
ThermalState thermal_equilibrium(const sim::FlightState& state, const PhysicalEffects& effects,
                                 const SensorCalibration& calib);

// One 0.02 s synthesis step: advances thermal states and emits the 27-channel
// frame. Noise is a pure function of (noise_seed, step_index, channel), which
// is what makes paired mirrors cancel it exactly. Throws SimulationFault on
// non-finite output.
SensorFrame synthesize(const sim::FlightState& state, const PhysicalEffects& effects,
                       ThermalState& thermal, const SensorCalibration& calib,
                       std::uint64_t noise_seed, std::int64_t step_index, double dt);

}  // namespace twindiag::sensors
