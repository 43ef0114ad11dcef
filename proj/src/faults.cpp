#include "twindiag/faults.hpp"

#include <algorithm>
#include <cmath>

#include "twindiag/errors.hpp"
#include "twindiag/rng.hpp"

namespace twindiag::faults {

const std::vector<FaultClass>& all_classes() {
    static const std::vector<FaultClass> v = [] {
        std::vector<FaultClass> out;
        for (int i = 0; i < kNumClasses; ++i) out.push_back(static_cast<FaultClass>(i));
        return out;
    }();
    return v;
}

const std::string& to_string(FaultClass fc) {
    static const std::vector<std::string> names = {
        "nominal",
        "baffle_crack",
        "baffle_loose",
        "baffle_missing_segment",
        "baffle_seal_wear",
        "baffle_bent",
        "baffle_fastener_failure",
        "rocker_cover_leak",
        "engine_seal_loose",
        "oil_cooler_maintenance",
        "intake_gasket_leak",
        "intake_manifold_loose",
        "cylinder_compression",
        "cylinder_crack",
        "engine_failure",
        "engine_running_rough",
        "engine_overspeed",
        "engine_idle_problem",
        "in_flight_anomaly",
        "engine_requires_maintenance",
    };
    return names.at(static_cast<std::size_t>(fc));
}

FaultClass fault_class_from_string(const std::string& name) {
    for (FaultClass fc : all_classes())
        if (to_string(fc) == name) return fc;
    throw InputError("unknown fault class: " + name);
}

DegradationModel DegradationModel::exponential(double s_inf, double tau) {
    DegradationModel m;
    m.kind = Kind::exponential_approach;
    m.s_inf = s_inf;
    m.tau = tau;
    return m;
}

DegradationModel DegradationModel::linear_model(double rate, double s_max) {
    DegradationModel m;
    m.kind = Kind::linear;
    m.rate = rate;
    m.s_max = s_max;
    return m;
}

DegradationModel DegradationModel::fatigue(double k, double alpha, double s_max) {
    DegradationModel m;
    m.kind = Kind::fatigue;
    m.k = k;
    m.alpha = alpha;
    m.s_max = s_max;
    return m;
}

DegradationModel DegradationModel::threshold_abrupt(double damage_rate, double threshold,
                                                    double s_jump) {
    DegradationModel m;
    m.kind = Kind::threshold_abrupt;
    m.damage_rate = damage_rate;
    m.threshold = threshold;
    m.s_jump = s_jump;
    return m;
}

double DegradationModel::severity_at(double dt_since) const {
    if (dt_since <= 0.0) return 0.0;
    switch (kind) {
        case Kind::exponential_approach:
            return s_inf * (1.0 - std::exp(-dt_since / tau));
        case Kind::linear:
            return std::min(rate * dt_since, s_max);
        case Kind::fatigue:
            return std::min(k * std::pow(dt_since, alpha), s_max);
        case Kind::threshold_abrupt:
            return damage_rate * dt_since >= threshold ? s_jump : 0.0;
    }
    return 0.0;
}

double FaultCondition::severity(const std::string& var_name) const {
    for (const auto& v : state)
        if (v.name == var_name) return v.severity;
    throw InputError("unknown fault state variable: " + var_name);
}

FaultCondition make_fault_condition(FaultClass fc, double t0, std::uint64_t seed) {
    FaultCondition c;
    c.fault_class = fc;
    c.t0 = t0;
    c.seed = seed;

    Rng rng(hash_combine(seed, 0xfa17ULL));
    c.roughness_freq_hz = rng.uniform(2.0, 5.0);
    for (int i = 0; i < 4; ++i) c.roughness_phase[i] = rng.uniform(0.0, 2.0 * M_PI);

    using DM = DegradationModel;
    auto add = [&](const std::string& name, DM m) { c.state.push_back({name, m, 0.0}); };

    switch (fc) {
        case FaultClass::nominal:
            break;
        case FaultClass::baffle_crack:
            add("crack_length", DM::exponential(1.0, 25.0));
            break;
        case FaultClass::baffle_loose:
            add("structural_looseness", DM::linear_model(1.0 / 60.0, 1.0));
            break;
        case FaultClass::baffle_missing_segment:
            add("segment_loss", DM::threshold_abrupt(1.0 / 8.0, 1.0, 1.0));
            break;
        case FaultClass::baffle_seal_wear:
            add("wear_amount", DM::fatigue(std::pow(50.0, -1.6), 1.6, 1.0));
            break;
        case FaultClass::baffle_bent:
            add("deflection", DM::linear_model(1.0 / 80.0, 1.0));
            break;
        case FaultClass::baffle_fastener_failure:
            add("fastener_damage", DM::threshold_abrupt(1.0 / 15.0, 1.0, 1.0));
            break;
        case FaultClass::rocker_cover_leak:
            add("cumulative_oil_loss", DM::linear_model(0.002, 3.5));
            break;
        case FaultClass::engine_seal_loose:
            add("structural_looseness", DM::exponential(1.0, 40.0));
            add("cumulative_oil_loss", DM::linear_model(0.0008, 3.5));
            break;
        case FaultClass::oil_cooler_maintenance:
            add("fouling", DM::exponential(1.0, 30.0));
            break;
        case FaultClass::intake_gasket_leak:
            add("leakage_rate", DM::exponential(1.0, 15.0));
            break;
        case FaultClass::intake_manifold_loose:
            add("structural_looseness", DM::linear_model(1.0 / 40.0, 1.0));
            break;
        case FaultClass::cylinder_compression:
            add("compression_loss", DM::exponential(1.0, 20.0));
            break;
        case FaultClass::cylinder_crack:
            add("crack_length", DM::fatigue(std::pow(40.0, -1.8), 1.8, 1.0));
            break;
        case FaultClass::engine_failure:
            add("power_decay", DM::exponential(1.0, 15.0));
            break;
        case FaultClass::engine_running_rough:
            add("combustion_unevenness", DM::exponential(1.0, 10.0));
            break;
        case FaultClass::engine_overspeed:
            add("governor_drift", DM::exponential(1.0, 20.0));
            break;
        case FaultClass::engine_idle_problem:
            add("idle_instability", DM::exponential(1.0, 15.0));
            c.roughness_freq_hz = 1.2;
            break;
        case FaultClass::in_flight_anomaly:
            add("accumulated_damage", DM::threshold_abrupt(1.0 / 5.0, 1.0, 1.0));
            break;
        case FaultClass::engine_requires_maintenance:
            add("wear_amount", DM::linear_model(1.0 / 450.0, 1.0));
            break;
    }
    return c;
}

void evolve(FaultCondition& cond, double t, double /*dt*/) {
    const double since = t - cond.t0;
    for (auto& v : cond.state) v.severity = v.model.severity_at(since);
}

namespace {

// Per-cylinder compression modulation: sinusoid at the episode frequency plus
// band-limited jitter, clamped to the admissible compression range.
void apply_roughness(PhysicalEffects& e, const FaultCondition& cond, double t) {
    if (e.roughness_amp <= 0.0) return;
    const double since = t - cond.t0;
    const auto block = static_cast<std::uint64_t>(std::max(since, 0.0) * 10.0);
    for (int i = 0; i < 4; ++i) {
        const double jitter =
            counter_normal(cond.seed, block, 0x70ULL + static_cast<std::uint64_t>(i));
        const double mod = 1.0 + e.roughness_amp *
                                     (0.7 * std::sin(2.0 * M_PI * cond.roughness_freq_hz * since +
                                                     cond.roughness_phase[i]) +
                                      0.3 * jitter);
        e.compression_factor[i] = std::clamp(e.compression_factor[i] * mod, 0.5, 1.05);
    }
}

// in_flight_anomaly pulse train: 5-10 s interruptions separated by 8-15 s
// gaps, laid out deterministically from the episode seed.
bool in_anomaly_pulse(const FaultCondition& cond, double since_onset) {
    double cursor = 0.0;
    for (std::uint64_t k = 0; k < 64; ++k) {
        const double len = 5.0 + 5.0 * counter_uniform(cond.seed, 0xA0ULL, 2 * k);
        const double gap = 8.0 + 7.0 * counter_uniform(cond.seed, 0xA0ULL, 2 * k + 1);
        if (since_onset < cursor + len) return true;
        if (since_onset < cursor + len + gap) return false;
        cursor += len + gap;
    }
    return false;
}

}  // namespace

PhysicalEffects effects_of(const FaultCondition& cond, double t, double prev_throttle_cmd) {
    PhysicalEffects e;
    if (cond.fault_class == FaultClass::nominal || t < cond.t0) return e;

    switch (cond.fault_class) {
        case FaultClass::baffle_crack:
            e.cooling_eff[0] = 1.0 - 0.45 * cond.severity("crack_length");
            break;
        case FaultClass::baffle_loose:
            e.cooling_eff[1] = 1.0 - 0.30 * cond.severity("structural_looseness");
            break;
        case FaultClass::baffle_missing_segment: {
            const double s = cond.severity("segment_loss");
            e.cooling_eff[0] = 1.0 - 0.35 * s;
            e.cooling_eff[1] = 1.0 - 0.35 * s;
            break;
        }
        case FaultClass::baffle_seal_wear:
            e.cooling_eff[2] = 1.0 - 0.35 * cond.severity("wear_amount");
            break;
        case FaultClass::baffle_bent:
            e.cooling_eff[3] = 1.0 - 0.15 * cond.severity("deflection");
            break;
        case FaultClass::baffle_fastener_failure:
            e.cooling_eff[1] = 1.0 - 0.45 * cond.severity("fastener_damage");
            break;
        case FaultClass::rocker_cover_leak:
            e.oil_leak_cum = cond.severity("cumulative_oil_loss");
            break;
        case FaultClass::engine_seal_loose:
            e.oil_leak_cum = cond.severity("cumulative_oil_loss");
            e.friction_factor = 1.0 + 0.1 * cond.severity("structural_looseness");
            break;
        case FaultClass::oil_cooler_maintenance:
            e.oil_cooler_eff = 1.0 - 0.45 * cond.severity("fouling");
            break;
        case FaultClass::intake_gasket_leak: {
            const double s = cond.severity("leakage_rate");
            e.mixture_offset = -0.08 * s;
            e.throttle_correction = 1.0 - 0.03 * s;
            break;
        }
        case FaultClass::intake_manifold_loose: {
            const double s = cond.severity("structural_looseness");
            const double breathe = 0.7 + 0.3 * std::sin(2.0 * M_PI * 0.6 * (t - cond.t0));
            e.mixture_offset = -0.04 * s * breathe;
            e.roughness_amp = 0.02 * s;
            apply_roughness(e, cond, t);
            break;
        }
        case FaultClass::cylinder_compression:
            e.compression_factor[0] = 1.0 - 0.30 * cond.severity("compression_loss");
            break;
        case FaultClass::cylinder_crack: {
            const double s = cond.severity("crack_length");
            e.compression_factor[0] = 1.0 - 0.20 * s;
            e.cooling_eff[0] = 1.0 - 0.15 * s;
            break;
        }
        case FaultClass::engine_failure:
            e.throttle_correction = std::exp(-5.0 * cond.severity("power_decay"));
            break;
        case FaultClass::engine_running_rough:
            e.roughness_amp = 0.10 * cond.severity("combustion_unevenness");
            apply_roughness(e, cond, t);
            break;
        case FaultClass::engine_overspeed:
            e.rpm_bias = 250.0 * cond.severity("governor_drift");
            break;
        case FaultClass::engine_idle_problem: {
            const double s = cond.severity("idle_instability");
            e.roughness_amp = 0.05 * s;
            apply_roughness(e, cond, t);
            if (prev_throttle_cmd < 0.3) e.throttle_correction = 1.0 - 0.3 * s;
            break;
        }
        case FaultClass::in_flight_anomaly: {
            if (cond.severity("accumulated_damage") > 0.0) {
                const double onset = cond.t0 + 5.0;
                if (t >= onset && in_anomaly_pulse(cond, t - onset))
                    e.throttle_correction = 0.85;
            }
            break;
        }
        case FaultClass::engine_requires_maintenance: {
            // Dead zone: wear below tolerance has no measurable effect, so the
            // observable drift stays near noise level through the window.
            const double s = cond.severity("wear_amount");
            const double g = std::max(0.0, s - 0.15) / 0.85;
            e.friction_factor = 1.0 + 0.03 * g;
            for (auto& ce : e.cooling_eff) ce = 1.0 - 0.03 * g;
            break;
        }
        case FaultClass::nominal:
            break;
    }
    return e;
}

}  // namespace twindiag::faults
