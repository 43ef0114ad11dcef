#include "twindiag/sensors.hpp"

#include <algorithm>
#include <cmath>

#include "twindiag/errors.hpp"
#include "twindiag/rng.hpp"

namespace twindiag::sensors {

SensorCalibration SensorCalibration::for_airframe(std::uint64_t airframe_seed) {
    SensorCalibration c;
    for (int i = 0; i < 4; ++i) {
        c.cht_offset[i] = 3.0 * counter_normal(airframe_seed, 100, static_cast<std::uint64_t>(i));
        c.egt_offset[i] = 8.0 * counter_normal(airframe_seed, 101, static_cast<std::uint64_t>(i));
    }
    return c;
}

namespace {

struct Equilibria {
    std::array<double, 4> cht_target;
    std::array<double, 4> egt_target;
    double oil_heat_in;   // C/s numerator of the oil balance
    double oil_cool_coeff;
    double oat_c;
};

Equilibria compute_targets(const sim::FlightState& state, const PhysicalEffects& effects,
                           const SynthConstants& k) {
    Equilibria eq{};
    eq.oat_c = state.ambient_temp - 273.15;

    double comp_sum = 0.0;
    for (double c : effects.compression_factor) comp_sum += c;
    if (comp_sum <= 0.0) comp_sum = 1e-9;

    const double speed_factor = 0.4 + 0.6 * state.true_airspeed / k.v_ref_kts;
    const double m_eff = state.mixture_cmd + effects.mixture_offset;
    const double m_dev = m_eff - k.mixture_stoich;
    const double mix_term = m_dev >= 0.0 ? -k.egt_rich_slope * m_dev : -k.egt_lean_slope * -m_dev;

    for (int i = 0; i < 4; ++i) {
        const double comp = effects.compression_factor[i];
        const double p_cyl = state.shaft_power * comp / comp_sum;
        const double p_ratio = p_cyl / k.p_ref_cyl;
        const double cooling = std::max(effects.cooling_eff[i], 0.05);
        double cht_t = eq.oat_c + k.cht_gain * p_ratio * comp / (cooling * speed_factor);
        cht_t = std::clamp(cht_t, eq.oat_c - 5.0, k.cht_equilibrium_max);
        eq.cht_target[i] = cht_t;
        eq.egt_target[i] = k.egt_base + k.egt_power_gain * comp * p_ratio + mix_term;
    }

    eq.oil_heat_in = k.oil_friction_gain * effects.friction_factor *
                     (state.shaft_power / k.p_ref_oil);
    eq.oil_cool_coeff = k.oil_cooling_rate * std::max(effects.oil_cooler_eff, 0.05);
    return eq;
}

}  // namespace

ThermalState thermal_equilibrium(const sim::FlightState& state, const PhysicalEffects& effects,
                                 const SensorCalibration& calib) {
    const auto eq = compute_targets(state, effects, calib.k);
    ThermalState t;
    t.cht = eq.cht_target;
    t.egt = eq.egt_target;
    t.oil_temp = eq.oat_c + eq.oil_heat_in / eq.oil_cool_coeff;
    return t;
}

SensorFrame synthesize(const sim::FlightState& state, const PhysicalEffects& effects,
                       ThermalState& thermal, const SensorCalibration& calib,
                       std::uint64_t noise_seed, std::int64_t step_index, double dt) {
    const SynthConstants& k = calib.k;
    const auto eq = compute_targets(state, effects, k);

    for (int i = 0; i < 4; ++i) {
        thermal.cht[i] += (eq.cht_target[i] - thermal.cht[i]) * dt / k.cht_tau;
        thermal.egt[i] += (eq.egt_target[i] - thermal.egt[i]) * dt / k.egt_tau;
    }
    thermal.oil_temp +=
        (eq.oil_heat_in - eq.oil_cool_coeff * (thermal.oil_temp - eq.oat_c)) * dt /
        k.oil_heat_capacity;

    const double volume_factor =
        std::clamp(1.0 - effects.oil_leak_cum / k.oil_capacity_kg, 0.0, 1.0);
    const double viscosity = std::exp(-k.viscosity_beta * (thermal.oil_temp - 85.0));
    const double oil_press = k.oil_pump_gain * (state.rpm / 2700.0) * viscosity * volume_factor;

    const double fuel_flow_kg_h = state.fuel_flow * 3600.0;
    const double fuel_press = k.fuel_press_base - k.fuel_press_flow_drop * fuel_flow_kg_h;

    const bool alternator_online = state.rpm > k.alternator_min_rpm;
    double bus_v, alt_amps, batt_v, batt_amps;
    if (alternator_online) {
        bus_v = 14.0 - k.bus_sag * (1.0 - state.rpm / 2700.0);
        alt_amps = k.electrical_load_w / bus_v;
        batt_v = 12.9;
        batt_amps = 2.0;
    } else {
        batt_v = 12.4;
        bus_v = batt_v;
        alt_amps = 0.0;
        batt_amps = -k.electrical_load_w / batt_v;
    }

    const double ias =
        state.true_airspeed * std::sqrt(state.air_density / sim::kSeaLevelDensity);

    SensorFrame f{};
    f[kBusVoltage] = bus_v;
    f[kAlternatorAmps] = alt_amps;
    f[kBatteryVoltage] = batt_v;
    f[kBatteryAmps] = batt_amps;
    f[kFuelQty] = state.fuel_remaining;
    f[kFuelFlow] = fuel_flow_kg_h;
    f[kFuelPressure] = fuel_press;
    f[kOilTemp] = thermal.oil_temp;
    f[kOilPress] = oil_press;
    f[kRpm] = state.rpm;
    for (int i = 0; i < 4; ++i) {
        f[kCht1 + i] = thermal.cht[i] + calib.cht_offset[i];
        f[kEgt1 + i] = thermal.egt[i] + calib.egt_offset[i];
    }
    f[kIndicatedAirspeed] = ias;
    f[kAltitude] = state.altitude;
    f[kClimbRate] = state.climb_rate;
    f[kOutsideAirTemp] = eq.oat_c;
    f[kHeading] = state.heading;
    f[kThrottleCmd] = state.throttle_cmd;
    f[kMixtureCmd] = state.mixture_cmd;
    f[kClimbCmd] = state.climb_cmd / 700.0;
    f[kHeadingCmd] = state.turn_rate_cmd / 3.0;

    if (calib.noise_enabled) {
        const auto& table = canonical_channels();
        for (int c = 0; c < kNumMonitored; ++c)
            f[c] += table[c].noise_sigma *
                    counter_normal(noise_seed, static_cast<std::uint64_t>(step_index),
                                   static_cast<std::uint64_t>(c));
    }

    double check = 0.0;
    for (double v : f) check += v;
    if (!std::isfinite(check))
        throw SimulationFault("synthesize: non-finite sensor frame at t=" +
                              std::to_string(state.t));
    return f;
}

}  // namespace twindiag::sensors
