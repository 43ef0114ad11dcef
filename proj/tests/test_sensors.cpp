#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twindiag/channels.hpp"
#include "twindiag/sensors.hpp"

using namespace twindiag;
using namespace twindiag::sensors;

namespace {

SensorFrame settle(const sim::SimConfig& cfg, const PhysicalEffects& fx, double seconds,
                   ThermalState* out_thermal = nullptr) {
    auto state = sim::trim_state(cfg);
    auto ap = sim::make_autopilot(cfg);
    SensorCalibration calib;  // no airframe offsets
    calib.noise_enabled = false;
    auto thermal = thermal_equilibrium(state, PhysicalEffects::identity(), calib);

    SensorFrame frame{};
    const int n = static_cast<int>(seconds / cfg.dt + 0.5);
    for (int i = 0; i < n; ++i) {
        state = sim::step(state, ap, cfg, fx);
        frame = synthesize(state, fx, thermal, calib, 0, i, cfg.dt);
    }
    if (out_thermal) *out_thermal = thermal;
    return frame;
}

}  // namespace

TEST_CASE("canonical channel table") {
    const auto& chans = canonical_channels();
    CHECK(chans.size() == 27);
    int monitored = 0;
    for (const auto& d : chans) monitored += d.monitored;
    CHECK(monitored == 23);
    CHECK(chans[0].name == "bus_voltage");
    CHECK(chans[9].name == "rpm");  // the 10th channel overall
    CHECK(channel_index("rpm") == kRpm);
    CHECK(channel_index("not_a_channel") == -1);
    for (const auto& d : chans) CHECK(d.range_min < d.range_max);
    for (const auto& d : chans) CHECK(d.noise_sigma >= 0.0);
}

TEST_CASE("nominal cruise settles at the calibration setpoints") {
    sim::SimConfig cfg;
    const auto frame = settle(cfg, PhysicalEffects::identity(), 120.0);

    for (int i = 0; i < 4; ++i) {
        CHECK(frame[static_cast<std::size_t>(kCht1 + i)] == doctest::Approx(180.0).epsilon(0.02));
        CHECK(frame[static_cast<std::size_t>(kEgt1 + i)] == doctest::Approx(700.0).epsilon(0.02));
    }
    CHECK(frame[kOilTemp] == doctest::Approx(85.0).epsilon(0.02));
    CHECK(frame[kOilPress] == doctest::Approx(380.0).epsilon(0.02));
}

TEST_CASE("local cooling loss heats only its own cylinder") {
    sim::SimConfig cfg;
    PhysicalEffects fx;
    fx.cooling_eff[0] = 0.55;

    const auto nominal = settle(cfg, PhysicalEffects::identity(), 200.0);
    const auto faulted = settle(cfg, fx, 200.0);

    CHECK(faulted[kCht1] - faulted[kCht2] > 20.0);
    CHECK(faulted[kCht1] - faulted[kCht3] > 20.0);
    CHECK(faulted[kCht1] - faulted[kCht4] > 20.0);
    // Other cylinders and the oil system stay put.
    for (int ch : {kCht2, kCht3, kCht4, kOilTemp, kOilPress})
        CHECK(std::abs(faulted[static_cast<std::size_t>(ch)] -
                       nominal[static_cast<std::size_t>(ch)]) < 1.0);
}

TEST_CASE("oil cooler loss raises oil temp and drops pressure through viscosity") {
    sim::SimConfig cfg;
    PhysicalEffects fx;
    fx.oil_cooler_eff = 0.60;

    auto state = sim::trim_state(cfg);
    auto ap = sim::make_autopilot(cfg);
    SensorCalibration calib;
    calib.noise_enabled = false;
    auto thermal = thermal_equilibrium(state, PhysicalEffects::identity(), calib);

    double prev_oil = 85.0;
    SensorFrame frame{};
    for (int i = 0; i < 10000; ++i) {
        state = sim::step(state, ap, cfg, fx);
        frame = synthesize(state, fx, thermal, calib, 0, i, cfg.dt);
        if (i % 500 == 499) {
            CHECK(frame[kOilTemp] >= prev_oil - 1e-6);  // monotone rise
            prev_oil = frame[kOilTemp];
        }
    }
    const auto nominal = settle(cfg, PhysicalEffects::identity(), 200.0);
    CHECK(frame[kOilTemp] > nominal[kOilTemp] + 10.0);
    CHECK(frame[kOilPress] < nominal[kOilPress] - 10.0);
}

TEST_CASE("viscosity coupling: hotter oil means lower pressure at equal rpm") {
    sim::SimConfig cfg;
    auto state = sim::trim_state(cfg);
    SensorCalibration calib;
    calib.noise_enabled = false;

    ThermalState cool = thermal_equilibrium(state, PhysicalEffects::identity(), calib);
    ThermalState hot = cool;
    hot.oil_temp += 30.0;
    auto f_cool = synthesize(state, PhysicalEffects::identity(), cool, calib, 0, 0, cfg.dt);
    auto f_hot = synthesize(state, PhysicalEffects::identity(), hot, calib, 0, 0, cfg.dt);
    CHECK(f_hot[kOilPress] < f_cool[kOilPress]);
}

TEST_CASE("noise-off synthesis is deterministic") {
    sim::SimConfig cfg;
    const auto a = settle(cfg, PhysicalEffects::identity(), 10.0);
    const auto b = settle(cfg, PhysicalEffects::identity(), 10.0);
    CHECK(a == b);
}

TEST_CASE("noise is a pure function of (seed, step, channel)") {
    sim::SimConfig cfg;
    auto state = sim::trim_state(cfg);
    SensorCalibration calib;
    auto t1 = thermal_equilibrium(state, PhysicalEffects::identity(), calib);
    auto t2 = t1;
    const auto f1 = synthesize(state, PhysicalEffects::identity(), t1, calib, 123, 7, cfg.dt);
    const auto f2 = synthesize(state, PhysicalEffects::identity(), t2, calib, 123, 7, cfg.dt);
    CHECK(f1 == f2);
    const auto f3 = synthesize(state, PhysicalEffects::identity(), t2, calib, 123, 8, cfg.dt);
    CHECK(f1 != f3);
}
