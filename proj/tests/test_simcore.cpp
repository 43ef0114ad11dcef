#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twindiag/errors.hpp"
#include "twindiag/faults.hpp"
#include "twindiag/rng.hpp"
#include "twindiag/simcore.hpp"

using namespace twindiag;
using namespace twindiag::sim;

TEST_CASE("isa atmosphere matches hand-evaluated lapse model") {
    // Sea-level reference.
    auto sl = isa_atmosphere(0.0);
    CHECK(sl.temperature_k == doctest::Approx(288.15));
    CHECK(sl.density == doctest::Approx(1.225));

    // 5000 ft = 1524 m: T = 288.15 - 0.0065*1524 = 278.244 K,
    // rho = 1.225*(278.244/288.15)^4.2561 = 1.05554 kg/m^3.
    auto mid = isa_atmosphere(5000.0);
    CHECK(mid.temperature_k == doctest::Approx(278.244).epsilon(1e-6));
    CHECK(mid.density == doctest::Approx(1.05554).epsilon(1e-4));

    // 10000 ft = 3048 m.
    auto high = isa_atmosphere(10000.0);
    CHECK(high.temperature_k == doctest::Approx(268.338).epsilon(1e-6));
    CHECK(high.density == doctest::Approx(0.90464).epsilon(1e-4));

    CHECK_THROWS_AS(isa_atmosphere(-10.0), InputError);
    CHECK_THROWS_AS(isa_atmosphere(25000.0), InputError);
}

TEST_CASE("engine power scales with corrections") {
    SimConfig cfg;
    const std::array<double, 4> ones = {1, 1, 1, 1};

    auto base = engine_power(0.65, 0.8, kSeaLevelDensity, 1.0, ones, cfg);
    CHECK(base.shaft_power ==
          doctest::Approx(cfg.max_shaft_power_w * 0.65 * mixture_efficiency(0.8)));

    const std::array<double, 4> degraded = {0.925, 0.925, 0.925, 0.925};
    auto lossy = engine_power(0.65, 0.8, kSeaLevelDensity, 1.0, degraded, cfg);
    CHECK(lossy.shaft_power == doctest::Approx(base.shaft_power * 0.925));

    auto cut = engine_power(0.65, 0.8, kSeaLevelDensity, 0.0, ones, cfg);
    CHECK(cut.shaft_power == 0.0);
    CHECK(cut.rpm_target == doctest::Approx(cfg.rpm_idle));
}

TEST_CASE("power causality: throttle correction below one never raises power") {
    SimConfig cfg;
    const std::array<double, 4> ones = {1, 1, 1, 1};
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        const double thr = rng.uniform(0.0, 1.0);
        const double corr = rng.uniform(0.0, 1.0);
        const double rho = rng.uniform(0.9, 1.225);
        auto ident = engine_power(thr, 0.8, rho, 1.0, ones, cfg);
        auto corrected = engine_power(thr, 0.8, rho, corr, ones, cfg);
        CHECK(corrected.shaft_power <= ident.shaft_power + 1e-12);
    }
}

TEST_CASE("pid basics") {
    PidChannel ch{2.0, 0.5, 0.0, 0.0, 10.0, -100.0, 100.0, 0.0, false};
    // Zero error, zero integrator -> zero command.
    CHECK(pid_update(ch, 5.0, 5.0, 0.02) == doctest::Approx(0.0));

    // Constant error with Ki = 0 -> Kp * e once the derivative settles.
    PidChannel p_only{2.0, 0.0, 0.1, 0.0, 10.0, -100.0, 100.0, 0.0, false};
    pid_update(p_only, 10.0, 7.0, 0.02);
    const double cmd = pid_update(p_only, 10.0, 7.0, 0.02);
    CHECK(cmd == doctest::Approx(2.0 * 3.0));
}

TEST_CASE("pid anti-windup freezes the integrator at saturation") {
    PidChannel ch{1.0, 1.0, 0.0, 0.0, 50.0, -1.0, 1.0, 0.0, false};
    for (int i = 0; i < 1000; ++i) pid_update(ch, 100.0, 0.0, 0.02);
    CHECK(ch.integrator <= 50.0);
    CHECK(std::abs(ch.integrator) < 1e-9);  // frozen while saturated from the start
}

static FlightState advance(const SimConfig& cfg, FlightState s, AutopilotState& ap,
                           faults::FaultCondition& cond, double seconds) {
    const int n = static_cast<int>(seconds / cfg.dt + 0.5);
    for (int i = 0; i < n; ++i) {
        faults::evolve(cond, s.t, cfg.dt);
        const auto fx = faults::effects_of(cond, s.t, s.throttle_cmd);
        s = step(s, ap, cfg, fx);
    }
    return s;
}

TEST_CASE("trim point is a fixed point of the step") {
    SimConfig cfg;
    auto s = trim_state(cfg);
    auto ap = make_autopilot(cfg);
    const auto next = step(s, ap, cfg, PhysicalEffects::identity());
    CHECK(std::abs(next.altitude - s.altitude) < 0.1);
    CHECK(std::abs(next.true_airspeed - s.true_airspeed) < 0.05);
}

TEST_CASE("nominal station keeping over a full episode") {
    SimConfig cfg;
    cfg.seed = 7;
    auto s = trim_state(cfg);
    auto ap = make_autopilot(cfg);
    auto cond = faults::make_fault_condition(faults::FaultClass::nominal, 100.0, 1);

    s = advance(cfg, s, ap, cond, 120.0);
    for (int i = 0; i < 9000; ++i) {  // remaining 180 s
        faults::evolve(cond, s.t, cfg.dt);
        s = step(s, ap, cfg, faults::effects_of(cond, s.t, s.throttle_cmd));
        CHECK(std::abs(s.altitude - cfg.target_altitude) < 100.0);
        CHECK(std::abs(s.true_airspeed - cfg.target_speed) < 5.0);
    }
}

TEST_CASE("altitude step command settles within 50 ft inside 120 s") {
    SimConfig cfg;
    auto s = trim_state(cfg);
    auto ap = make_autopilot(cfg);
    auto cond = faults::make_fault_condition(faults::FaultClass::nominal, 1e9, 1);

    cfg.target_altitude += 200.0;  // step change after trim
    s = advance(cfg, s, ap, cond, 120.0);
    CHECK(std::abs(s.altitude - cfg.target_altitude) < 50.0);
}

TEST_CASE("engine failure forces descent") {
    SimConfig cfg;
    auto s = trim_state(cfg);
    auto ap = make_autopilot(cfg);
    auto cond = faults::make_fault_condition(faults::FaultClass::engine_failure, 10.0, 3);

    s = advance(cfg, s, ap, cond, 20.0);  // 10 s past injection
    CHECK(s.climb_rate < 0.0);

    double prev_alt = s.altitude;
    for (int i = 0; i < 1000; ++i) {
        faults::evolve(cond, s.t, cfg.dt);
        s = step(s, ap, cfg, faults::effects_of(cond, s.t, s.throttle_cmd));
        CHECK(s.altitude < prev_alt);
        prev_alt = s.altitude;
    }
}

TEST_CASE("identical config produces bitwise identical trajectories") {
    SimConfig cfg;
    cfg.seed = 99;
    auto run = [&]() {
        auto s = trim_state(cfg);
        auto ap = make_autopilot(cfg);
        auto cond = faults::make_fault_condition(faults::FaultClass::baffle_crack, 30.0, 5);
        std::vector<double> series;
        for (int i = 0; i < 3000; ++i) {
            faults::evolve(cond, s.t, cfg.dt);
            s = step(s, ap, cfg, faults::effects_of(cond, s.t, s.throttle_cmd));
            series.push_back(s.altitude);
            series.push_back(s.true_airspeed);
            series.push_back(s.rpm);
        }
        return series;
    };
    CHECK(run() == run());
}

TEST_CASE("fuel is conserved and monotone") {
    SimConfig cfg;
    auto s = trim_state(cfg);
    auto ap = make_autopilot(cfg);
    auto cond = faults::make_fault_condition(faults::FaultClass::nominal, 1e9, 1);

    const double fuel0 = s.fuel_remaining;
    double burned = 0.0;
    double prev = fuel0;
    for (int i = 0; i < 15000; ++i) {
        faults::evolve(cond, s.t, cfg.dt);
        s = step(s, ap, cfg, faults::effects_of(cond, s.t, s.throttle_cmd));
        CHECK(s.fuel_remaining <= prev);
        burned += s.fuel_flow * cfg.dt;
        prev = s.fuel_remaining;
    }
    CHECK(fuel0 - s.fuel_remaining == doctest::Approx(burned).epsilon(1e-6));
}

TEST_CASE("climb command is limited by specific excess power") {
    SimConfig cfg;
    cfg.max_shaft_power_w = 70000.0;  // so full-throttle climb sits below the 700 ft/min clamp
    auto s = trim_state(cfg);
    auto ap = make_autopilot(cfg);
    auto cond = faults::make_fault_condition(faults::FaultClass::nominal, 1e9, 1);

    cfg.target_altitude += 3000.0;  // demands more climb than the engine can give
    s = advance(cfg, s, ap, cond, 40.0);
    const auto atm = isa_atmosphere(s.altitude);
    const auto avail = engine_power(1.0, s.mixture_cmd, atm.density, 1.0, {1, 1, 1, 1}, cfg);
    const double sep = specific_excess_power_climb(avail.shaft_power, atm.density,
                                                   s.true_airspeed * kKtsToMps, cfg);
    CHECK(s.climb_rate <= sep + 20.0);  // small lag tolerance
    CHECK(s.climb_rate <= cfg.climb_cmd_limit + 1e-9);
}
