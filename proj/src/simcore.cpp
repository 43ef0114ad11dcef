#include "twindiag/simcore.hpp"

#include <algorithm>
#include <cmath>

#include "twindiag/errors.hpp"

namespace twindiag::sim {

AtmosphereSample isa_atmosphere(double altitude_ft) {
    if (!(altitude_ft >= 0.0 && altitude_ft <= 20000.0))
        throw InputError("isa_atmosphere: altitude out of range [0, 20000] ft");
    const double h_m = altitude_ft * kFtToM;
    const double t = kSeaLevelTempK - 0.0065 * h_m;
    const double rho = kSeaLevelDensity * std::pow(t / kSeaLevelTempK, 4.2561);
    return {t, rho};
}

double mixture_efficiency(double mixture_cmd) {
    const double d = mixture_cmd - 0.8;
    return std::clamp(1.0 - 0.45 * d * d, 0.2, 1.0);
}

EnginePowerResult engine_power(double throttle_cmd, double mixture_cmd, double air_density,
                               double throttle_correction,
                               const std::array<double, 4>& per_cylinder_compression,
                               const SimConfig& config) {
    const double eff_throttle = std::clamp(throttle_cmd * throttle_correction, 0.0, 1.0);
    double mean_comp = 0.0;
    for (double c : per_cylinder_compression) mean_comp += c;
    mean_comp *= 0.25;

    EnginePowerResult r;
    r.shaft_power = config.max_shaft_power_w * eff_throttle *
                    (air_density / kSeaLevelDensity) * mixture_efficiency(mixture_cmd) *
                    mean_comp;
    r.rpm_target = config.rpm_idle +
                   (config.rpm_max - config.rpm_idle) * std::pow(eff_throttle, 0.8);
    const double mixture_factor = 0.6 + 0.5 * mixture_cmd;
    r.fuel_flow = config.sfc_kg_per_j * r.shaft_power / mixture_factor;
    return r;
}

double pid_update(PidChannel& ch, double setpoint, double measurement, double dt) {
    const double error = setpoint - measurement;
    const double deriv = ch.has_prev ? (error - ch.prev_error) / dt : 0.0;
    ch.prev_error = error;
    ch.has_prev = true;

    const double unsat = ch.kp * error + ch.integrator + ch.kd * deriv;
    const bool sat_hi = unsat > ch.out_max && error > 0.0;
    const bool sat_lo = unsat < ch.out_min && error < 0.0;
    if (!sat_hi && !sat_lo)
        ch.integrator = std::clamp(ch.integrator + ch.ki * error * dt, -ch.int_clamp, ch.int_clamp);

    return std::clamp(ch.kp * error + ch.integrator + ch.kd * deriv, ch.out_min, ch.out_max);
}

double drag_force(double density, double tas_mps, const SimConfig& config) {
    const double q = 0.5 * density * tas_mps * tas_mps;
    const double cl = config.mass_kg * kG / (q * config.wing_area_m2);
    const double cd = config.cd0 + config.induced_drag_k * cl * cl;
    return q * config.wing_area_m2 * cd;
}

double specific_excess_power_climb(double shaft_power, double density, double tas_mps,
                                   const SimConfig& config) {
    const double excess =
        shaft_power * config.prop_efficiency - drag_force(density, tas_mps, config) * tas_mps;
    return excess / (config.mass_kg * kG) / kFpmToMps;
}

double trim_throttle(const SimConfig& config) {
    const auto atm = isa_atmosphere(config.target_altitude);
    const double v = config.target_speed * kKtsToMps;
    const double p_req = drag_force(atm.density, v, config) * v / config.prop_efficiency;
    const double scale = config.max_shaft_power_w * (atm.density / kSeaLevelDensity) *
                         mixture_efficiency(config.mixture_default);
    return std::clamp(p_req / scale, 0.0, 1.0);
}

AutopilotState make_autopilot(const SimConfig& config) {
    AutopilotState ap;
    ap.altitude = {config.alt_kp, config.alt_ki, 0.0, 0.0, config.alt_int_clamp,
                   -config.climb_cmd_limit, config.climb_cmd_limit, 0.0, false};
    ap.speed = {config.spd_kp, config.spd_ki, 0.0, trim_throttle(config), config.spd_int_clamp,
                0.0, 1.0, 0.0, false};
    ap.heading = {config.hdg_kp, 0.0, 0.0, 0.0, 0.0,
                  -config.turn_rate_limit, config.turn_rate_limit, 0.0, false};
    return ap;
}

FlightState trim_state(const SimConfig& config) {
    FlightState s;
    const auto atm = isa_atmosphere(config.target_altitude);
    s.t = 0.0;
    s.altitude = config.target_altitude;
    s.true_airspeed = config.target_speed;
    s.heading = config.target_heading;
    s.climb_rate = 0.0;
    s.throttle_cmd = trim_throttle(config);
    s.mixture_cmd = config.mixture_default;
    s.fuel_remaining = config.initial_fuel_kg;
    s.ambient_temp = atm.temperature_k;
    s.air_density = atm.density;

    const auto p =
        engine_power(s.throttle_cmd, s.mixture_cmd, atm.density, 1.0, {1, 1, 1, 1}, config);
    s.rpm = p.rpm_target;
    s.shaft_power = p.shaft_power;
    s.fuel_flow = p.fuel_flow;
    s.thrust = p.shaft_power * config.prop_efficiency / (config.target_speed * kKtsToMps);
    return s;
}

static double wrap_heading_error(double err) {
    while (err > 180.0) err -= 360.0;
    while (err < -180.0) err += 360.0;
    return err;
}

FlightState step(const FlightState& state, AutopilotState& autopilot, const SimConfig& config,
                 const PhysicalEffects& effects) {
    const double dt = config.dt;
    FlightState next = state;

    const auto atm = isa_atmosphere(std::clamp(state.altitude, 0.0, 20000.0));
    next.ambient_temp = atm.temperature_k;
    next.air_density = atm.density;

    // Autopilot commands from current measurements.
    const double climb_cmd = pid_update(autopilot.altitude, config.target_altitude,
                                        state.altitude, dt);
    const double throttle = pid_update(autopilot.speed, config.target_speed,
                                       state.true_airspeed, dt);
    const double hdg_err = wrap_heading_error(config.target_heading - state.heading);
    const double turn_rate =
        std::clamp(autopilot.heading.kp * hdg_err, -config.turn_rate_limit,
                   config.turn_rate_limit);

    next.throttle_cmd = throttle;
    next.mixture_cmd = config.mixture_default;
    next.climb_cmd = climb_cmd;
    next.turn_rate_cmd = turn_rate;

    // Engine response. Fuel exhaustion cuts power regardless of commands.
    auto power = engine_power(throttle, next.mixture_cmd, atm.density,
                              effects.throttle_correction, effects.compression_factor, config);
    if (state.fuel_remaining <= 0.0) {
        power.shaft_power = 0.0;
        power.fuel_flow = 0.0;
        power.rpm_target = 0.0;
    }
    next.rpm = state.rpm + (power.rpm_target + effects.rpm_bias - state.rpm) * dt /
               config.rpm_time_constant;
    next.shaft_power = power.shaft_power;
    next.fuel_flow = power.fuel_flow;

    // Climb limited by specific excess power at the power available under the
    // current effects (full throttle), not at the instantaneous setting;
    // descent limited structurally.
    const double v_mps = std::max(state.true_airspeed, 30.0) * kKtsToMps;
    auto avail = engine_power(1.0, next.mixture_cmd, atm.density, effects.throttle_correction,
                              effects.compression_factor, config);
    if (state.fuel_remaining <= 0.0) avail.shaft_power = 0.0;
    const double climb_max =
        specific_excess_power_climb(avail.shaft_power, atm.density, v_mps, config);
    const double achievable =
        std::clamp(std::min(climb_cmd, climb_max), config.descent_limit, config.climb_cmd_limit);
    next.climb_rate =
        state.climb_rate + (achievable - state.climb_rate) * dt / config.climb_time_constant;

    // Longitudinal energy balance.
    const double drag = drag_force(atm.density, v_mps, config);
    const double vs_mps = next.climb_rate * kFpmToMps;
    const double accel = (power.shaft_power * config.prop_efficiency / v_mps - drag) /
                             config.mass_kg -
                         kG * vs_mps / v_mps;
    next.true_airspeed = std::max(state.true_airspeed + accel / kKtsToMps * dt, 30.0);
    next.thrust = power.shaft_power * config.prop_efficiency / v_mps;

    next.altitude = std::max(state.altitude + next.climb_rate / 60.0 * dt, 0.0);
    next.heading = state.heading + turn_rate * dt;
    if (next.heading >= 360.0) next.heading -= 360.0;
    if (next.heading < 0.0) next.heading += 360.0;

    next.fuel_remaining = std::max(state.fuel_remaining - power.fuel_flow * dt, 0.0);
    next.t = state.t + dt;

    const double check = next.altitude + next.true_airspeed + next.climb_rate + next.rpm +
                         next.shaft_power + next.fuel_remaining + next.heading;
    if (!std::isfinite(check))
        throw SimulationFault("step: non-finite flight state at t=" + std::to_string(next.t));
    return next;
}

}  // namespace twindiag::sim
