#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "twindiag/channels.hpp"
#include "twindiag/errors.hpp"
#include "twindiag/fmea.hpp"

using namespace twindiag;
using namespace twindiag::faults;

TEST_CASE("class enumeration") {
    CHECK(all_classes().size() == 20);
    int non_nominal = 0;
    for (auto fc : all_classes())
        if (fc != FaultClass::nominal) ++non_nominal;
    CHECK(non_nominal == 19);
    CHECK(fault_class_from_string("baffle_crack") == FaultClass::baffle_crack);
    CHECK_THROWS_AS(fault_class_from_string("bogus"), InputError);
}

TEST_CASE("degradation closed forms") {
    auto exp = DegradationModel::exponential(1.0, 20.0);
    CHECK(exp.severity_at(-1.0) == 0.0);
    CHECK(exp.severity_at(20.0) == doctest::Approx(1.0 - std::exp(-1.0)));

    auto lin = DegradationModel::linear_model(0.01, 0.5);
    CHECK(lin.severity_at(80.0) == doctest::Approx(0.5));  // clamped
    CHECK(lin.severity_at(10.0) == doctest::Approx(0.1));

    auto fat = DegradationModel::fatigue(std::pow(50.0, -1.6), 1.6, 1.0);
    CHECK(fat.severity_at(50.0) == doctest::Approx(1.0));
    CHECK(fat.severity_at(25.0) == doctest::Approx(std::pow(0.5, 1.6)));

    auto thr = DegradationModel::threshold_abrupt(0.1, 1.0, 0.8);
    CHECK(thr.severity_at(9.9) == 0.0);
    CHECK(thr.severity_at(10.1) == doctest::Approx(0.8));
}

TEST_CASE("severities stay zero before injection and grow monotonically after") {
    for (auto fc : all_classes()) {
        if (fc == FaultClass::nominal) continue;
        auto cond = make_fault_condition(fc, 60.0, 11);
        evolve(cond, 59.9, 0.02);
        for (const auto& v : cond.state) CHECK(v.severity == 0.0);

        double prev = -1.0;
        for (double t = 60.0; t < 260.0; t += 2.0) {
            evolve(cond, t, 0.02);
            double total = 0.0;
            for (const auto& v : cond.state) total += v.severity;
            CHECK(total >= prev - 1e-12);
            prev = total;
        }
    }
}

TEST_CASE("nominal effects are the identity at all times") {
    auto cond = make_fault_condition(FaultClass::nominal, 60.0, 1);
    for (double t : {0.0, 59.0, 100.0, 250.0}) {
        evolve(cond, t, 0.02);
        CHECK(effects_of(cond, t).is_identity());
    }
}

TEST_CASE("engine failure throttle correction decays as exp(-5s)") {
    auto cond = make_fault_condition(FaultClass::engine_failure, 50.0, 2);
    evolve(cond, 65.0, 0.02);
    const double s = cond.severity("power_decay");
    CHECK(s == doctest::Approx(1.0 - std::exp(-1.0)));
    CHECK(effects_of(cond, 65.0).throttle_correction == doctest::Approx(std::exp(-5.0 * s)));
}

TEST_CASE("cylinder compression reaches the 7.5% power-loss signature") {
    auto cond = make_fault_condition(FaultClass::cylinder_compression, 50.0, 2);
    evolve(cond, 250.0, 0.02);
    const auto fx = effects_of(cond, 250.0);
    CHECK(fx.compression_factor[0] == doctest::Approx(0.70).epsilon(0.001));
    CHECK(fx.mean_compression() == doctest::Approx(0.925).epsilon(0.001));
}

TEST_CASE("effects respect admissible ranges at full severity") {
    for (auto fc : all_classes()) {
        auto cond = make_fault_condition(fc, 60.0, 17);
        for (double t = 60.0; t < 300.0; t += 0.5) {
            evolve(cond, t, 0.02);
            const auto fx = effects_of(cond, t, 0.5);
            for (double c : fx.cooling_eff) CHECK(c > 0.0);
            for (double c : fx.compression_factor) {
                CHECK(c > 0.0);
                CHECK(c <= 1.05);
            }
            CHECK(fx.throttle_correction >= 0.0);
            CHECK(fx.throttle_correction <= 1.0);
            CHECK(fx.friction_factor >= 1.0);
            CHECK(fx.oil_leak_cum >= 0.0);
        }
    }
}

TEST_CASE("fmea knowledge base integrity") {
    CHECK(fmea_all().size() == 19);
    CHECK_THROWS_AS(fmea_lookup(FaultClass::nominal), InputError);

    for (auto fc : all_classes()) {
        if (fc == FaultClass::nominal) continue;
        const auto& e = fmea_lookup(fc);
        CHECK(e.fault_class == fc);
        CHECK(e.causal_chain.size() >= 3);
        CHECK(e.severity_rating >= 1);
        CHECK(e.severity_rating <= 5);
        CHECK(!e.key_sensors.empty());
        for (const auto& ks : e.key_sensors) CHECK(channel_index(ks.channel) >= 0);
        // Every step carries at least one keyword that is literally contained
        // in its own text, so a verbatim quote always covers the step.
        for (const auto& step : e.causal_chain) {
            bool self_hit = false;
            std::string folded = step.text;
            for (auto& c : folded) c = static_cast<char>(std::tolower(c));
            for (const auto& kw : step.keywords) {
                std::string k = kw;
                for (auto& c : k) c = static_cast<char>(std::tolower(c));
                if (folded.find(k) != std::string::npos) self_hit = true;
            }
            CHECK(self_hit);
        }
    }
}

TEST_CASE("fmea examples from the catalog") {
    const auto& crack = fmea_lookup(FaultClass::baffle_crack);
    bool has_cht1_up = false;
    for (const auto& ks : crack.key_sensors)
        if (ks.channel == "cht1" && ks.direction == Direction::up) has_cht1_up = true;
    CHECK(has_cht1_up);

    const auto& cooler = fmea_lookup(FaultClass::oil_cooler_maintenance);
    bool temp_up = false, press_down = false;
    for (const auto& ks : cooler.key_sensors) {
        if (ks.channel == "oil_temp" && ks.direction == Direction::up) temp_up = true;
        if (ks.channel == "oil_press" && ks.direction == Direction::down) press_down = true;
    }
    CHECK(temp_up);
    CHECK(press_down);

    const auto& gasket = fmea_lookup(FaultClass::intake_gasket_leak);
    int egt_up = 0;
    for (const auto& ks : gasket.key_sensors)
        if (ks.channel.rfind("egt", 0) == 0 && ks.direction == Direction::up) ++egt_up;
    CHECK(egt_up == 4);
}

TEST_CASE("kb export round-trips") {
    const auto json_text = export_kb("json");
    const auto parsed = parse_kb_json(json_text);
    REQUIRE(parsed.size() == fmea_all().size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        const auto& a = parsed[i];
        const auto& b = fmea_all()[i];
        CHECK(a.fault_class == b.fault_class);
        CHECK(a.mechanism == b.mechanism);
        CHECK(a.causal_chain.size() == b.causal_chain.size());
        for (std::size_t s = 0; s < a.causal_chain.size(); ++s) {
            CHECK(a.causal_chain[s].text == b.causal_chain[s].text);
            CHECK(a.causal_chain[s].keywords == b.causal_chain[s].keywords);
        }
        CHECK(a.key_sensors.size() == b.key_sensors.size());
        CHECK(a.severity_rating == b.severity_rating);
        CHECK(a.maintenance_recommendation == b.maintenance_recommendation);
    }
    CHECK_THROWS_AS(export_kb("xml"), InputError);
    CHECK(export_kb("text").find("fault_class: baffle_crack") != std::string::npos);
}
