#include "twindiag/fmea.hpp"

#include <json.hpp>

#include "twindiag/channels.hpp"
#include "twindiag/errors.hpp"

namespace twindiag::faults {

using nlohmann::json;

const std::string& to_string(Direction d) {
    static const std::vector<std::string> names = {"up", "down", "oscillating"};
    return names.at(static_cast<std::size_t>(d));
}

Direction direction_from_string(const std::string& s) {
    if (s == "up") return Direction::up;
    if (s == "down") return Direction::down;
    if (s == "oscillating") return Direction::oscillating;
    throw InputError("unknown direction: " + s);
}

namespace {

FmeaEntry entry(FaultClass fc, std::string mechanism, std::vector<CausalStep> chain,
                std::vector<KeySensor> sensors, int severity, std::string maintenance) {
    for (const auto& s : sensors)
        if (channel_index(s.channel) < 0)
            throw SchemaError("fmea key sensor not a canonical channel: " + s.channel);
    if (chain.size() < 3) throw SchemaError("fmea causal chain needs >= 3 steps");
    return FmeaEntry{fc, std::move(mechanism), std::move(chain), std::move(sensors), severity,
                     std::move(maintenance)};
}

std::vector<FmeaEntry> build_kb() {
    using D = Direction;
    std::vector<FmeaEntry> kb;

    kb.push_back(entry(
        FaultClass::baffle_crack,
        "A crack in the cylinder 1 cooling baffle lets cooling air bypass the fins, starving "
        "the cylinder of airflow while the rest of the engine stays unaffected.",
        {{"baffle crack opens across the cylinder 1 cooling duct", {"baffle crack", "crack"}},
         {"local cooling airflow is lost around cylinder 1", {"cooling airflow", "airflow loss"}},
         {"cylinder 1 cooling efficiency drops", {"cooling efficiency"}},
         {"cht1 rises toward a hotter thermal equilibrium", {"cht1"}}},
        {{"cht1", D::up}}, 3,
        "Remove the upper cowl, inspect the cylinder 1 baffle for cracking and replace the "
        "damaged segment; verify fin condition before return to service."));

    kb.push_back(entry(
        FaultClass::baffle_loose,
        "The cylinder 2 baffle retainer has loosened and the baffle gap widens steadily with "
        "vibration, bleeding off cooling air at a uniform rate.",
        {{"baffle retainer loosens at cylinder 2", {"loose", "retainer"}},
         {"the gap grows linearly and cooling airflow bleeds away", {"cooling airflow", "gap"}},
         {"cylinder 2 cooling efficiency degrades steadily", {"cooling efficiency"}},
         {"cht2 climbs gradually above its baseline", {"cht2"}}},
        {{"cht2", D::up}}, 2,
        "Re-seat and torque the cylinder 2 baffle retainers; check for elongated fastener "
        "holes."));

    kb.push_back(entry(
        FaultClass::baffle_missing_segment,
        "A baffle segment spanning cylinders 1 and 2 has departed, abruptly dumping the "
        "pressure differential that drives cooling air through both cylinders.",
        {{"a baffle segment detaches in flight", {"segment", "detach"}},
         {"cooling air bypasses cylinders 1 and 2 at once", {"cooling air", "bypass"}},
         {"cooling efficiency on both cylinders drops abruptly", {"cooling efficiency", "abrupt"}},
         {"cht1 and cht2 step up together", {"cht1", "cht2"}}},
        {{"cht1", D::up}, {"cht2", D::up}}, 3,
        "Locate and replace the missing baffle segment; inspect the cowl interior for impact "
        "damage."));

    kb.push_back(entry(
        FaultClass::baffle_seal_wear,
        "The flexible baffle seal at cylinder 3 wears at an accelerating rate, opening an "
        "ever-larger leak path for cooling air.",
        {{"baffle seal material wears progressively", {"seal wear", "wear"}},
         {"the leak path around cylinder 3 grows faster as the seal thins", {"leak path"}},
         {"cylinder 3 cooling efficiency falls with accelerating wear", {"cooling efficiency"}},
         {"cht3 rise accelerates over time", {"cht3"}}},
        {{"cht3", D::up}}, 2,
        "Replace the cylinder 3 baffle seal strip and verify seal contact along the cowl."));

    kb.push_back(entry(
        FaultClass::baffle_bent,
        "A bent cooling deflector at cylinder 4 misdirects part of the cooling airflow, a mild "
        "but persistent cooling deficit.",
        {{"the cylinder 4 deflector is bent out of position", {"bent", "deflector"}},
         {"a fraction of cooling airflow is misdirected", {"cooling airflow", "misdirect"}},
         {"cylinder 4 runs a mild cooling deficit", {"cooling deficit", "cooling efficiency"}},
         {"cht4 settles modestly above baseline", {"cht4"}}},
        {{"cht4", D::up}}, 1,
        "Straighten or replace the cylinder 4 baffle deflector at the next inspection."));

    kb.push_back(entry(
        FaultClass::baffle_fastener_failure,
        "A baffle fastener at cylinder 2 fatigues and releases; the baffle shifts suddenly and "
        "the cylinder loses most of its directed cooling air.",
        {{"the fastener fatigues under vibration until it releases", {"fastener", "fatigue"}},
         {"the baffle shifts abruptly once the fastener lets go", {"shifts", "abrupt"}},
         {"cylinder 2 cooling efficiency collapses after the release", {"cooling efficiency"}},
         {"cht2 jumps to a much hotter equilibrium", {"cht2"}}},
        {{"cht2", D::up}}, 3,
        "Replace the failed fastener and neighbouring hardware; inspect the baffle for "
        "cracking at the attachment point."));

    kb.push_back(entry(
        FaultClass::rocker_cover_leak,
        "A rocker cover gasket seep lets oil escape overboard; the loss is slow but cumulative "
        "and reduces the oil volume available at the pump inlet.",
        {{"the rocker cover gasket seeps oil", {"rocker cover", "gasket", "seep"}},
         {"oil loss accumulates overboard at a steady rate", {"oil loss", "cumulative"}},
         {"oil volume at the pump falls with the loss", {"oil volume"}},
         {"oil_press declines steadily", {"oil_press", "oil pressure"}}},
        {{"oil_press", D::down}}, 3,
        "Replace the rocker cover gasket, clean the spilled oil and confirm quantity before "
        "the next flight."));

    kb.push_back(entry(
        FaultClass::engine_seal_loose,
        "A loosening crankshaft seal lets oil seep out while admitting contamination that "
        "raises bearing friction.",
        {{"the crankshaft seal loosens and seeps", {"seal", "seep"}},
         {"contamination and film loss raise friction", {"friction"}},
         {"friction heat drives oil temperature up", {"oil temperature", "oil_temp"}},
         {"hot thin oil plus slow loss pull oil_press down", {"oil_press", "oil pressure"}}},
        {{"oil_temp", D::up}, {"oil_press", D::down}}, 3,
        "Replace the crankshaft seal, flush the lubrication system and verify oil grade."));

    kb.push_back(entry(
        FaultClass::oil_cooler_maintenance,
        "A fouled oil cooler matrix rejects less heat, so the oil runs hot; hot oil thins and "
        "the pump holds less pressure at the same speed.",
        {{"the oil cooler matrix is fouled and cooler efficiency is lost", {"cooler efficiency", "fouled"}},
         {"oil temperature rises toward a hotter equilibrium", {"oil temperature", "oil_temp"}},
         {"hotter oil viscosity decreases", {"viscosity"}},
         {"oil_press drops in step with the viscosity loss", {"oil_press", "oil pressure"}}},
        {{"oil_temp", D::up}, {"oil_press", D::down}}, 2,
        "Clean or exchange the oil cooler matrix and verify cooler airflow path."));

    kb.push_back(entry(
        FaultClass::intake_gasket_leak,
        "An intake gasket leak admits unmetered air downstream of the carburettor, shifting "
        "the whole engine lean of its commanded mixture.",
        {{"the intake gasket leaks unmetered air", {"intake gasket", "unmetered air"}},
         {"the effective mixture shifts lean toward peak", {"lean", "mixture"}},
         {"combustion temperature climbs toward the stoichiometric peak", {"combustion", "stoichiometric"}},
         {"egt1 through egt4 rise together", {"egt1", "egt"}}},
        {{"egt1", D::up}, {"egt2", D::up}, {"egt3", D::up}, {"egt4", D::up}}, 3,
        "Replace the intake gasket and leak-check the induction system with the engine "
        "running."));

    kb.push_back(entry(
        FaultClass::intake_manifold_loose,
        "A loose intake manifold joint breathes with engine vibration, leaning the mixture "
        "intermittently rather than steadily.",
        {{"the manifold joint is loose and breathes with vibration", {"manifold", "loose"}},
         {"the mixture leans intermittently as the joint opens", {"lean", "intermittent"}},
         {"exhaust temperature oscillates upward with mild roughness", {"oscillat", "roughness"}},
         {"egt channels trend up with a periodic component", {"egt"}}},
        {{"egt1", D::up}, {"egt2", D::up}, {"egt3", D::up}, {"egt4", D::up}}, 2,
        "Re-torque the intake manifold joints and replace any hardened hoses or clamps."));

    kb.push_back(entry(
        FaultClass::cylinder_compression,
        "Ring or valve seating loss in cylinder 1 lowers its compression, so the cylinder "
        "produces less work and less heat; the engine gives up roughly 7.5% of its power.",
        {{"ring or valve seating deteriorates in cylinder 1", {"ring", "valve", "compression"}},
         {"cylinder 1 develops less work per cycle", {"less work", "power"}},
         {"combustion and head temperatures fall on the weak cylinder", {"combustion"}},
         {"cht1 and egt1 drop below their neighbours", {"cht1", "egt1"}}},
        {{"cht1", D::down}, {"egt1", D::down}}, 4,
        "Perform a differential compression check on cylinder 1; lap or replace valves and "
        "rings as indicated."));

    kb.push_back(entry(
        FaultClass::cylinder_crack,
        "A crack in the cylinder 1 head bleeds compression while also damaging cooling fins, "
        "an accelerating combination of pressure loss and heat soak.",
        {{"a head crack grows with accelerating fatigue", {"crack", "fatigue"}},
         {"compression bleeds through the crack", {"compression"}},
         {"cooling fins around the crack lose effectiveness", {"cooling"}},
         {"cht1 rises while egt1 falls, a diverging pair", {"cht1", "egt1"}}},
        {{"cht1", D::up}, {"egt1", D::down}}, 5,
        "Ground the aircraft; borescope cylinder 1 and replace the cracked cylinder "
        "assembly."));

    kb.push_back(entry(
        FaultClass::engine_failure,
        "Progressive loss of combustion collapses shaft power exponentially toward zero; the "
        "aircraft cannot hold altitude on the remaining power.",
        {{"combustion collapses and effective power decays exponentially", {"power", "decay"}},
         {"rpm falls toward idle as drive torque vanishes", {"rpm"}},
         {"fuel_flow and oil_press fall with engine speed", {"fuel_flow", "oil_press"}},
         {"altitude decreases continuously once excess power is gone", {"altitude", "descent"}}},
        {{"rpm", D::down}, {"fuel_flow", D::down}, {"oil_press", D::down},
         {"altitude", D::down}, {"climb_rate", D::down}}, 5,
        "Execute the engine failure checklist and land as soon as possible; do not dispatch "
        "until the combustion fault is isolated."));

    kb.push_back(entry(
        FaultClass::engine_running_rough,
        "Uneven per-cylinder combustion modulates shaft torque at a few hertz; the engine "
        "shakes and the powertrain signals oscillate instead of drifting.",
        {{"per-cylinder combustion becomes uneven", {"uneven", "combustion"}},
         {"torque modulates at a few hertz", {"torque", "hertz", "modulat"}},
         {"rpm and fuel_flow oscillate around their trims", {"rpm", "fuel_flow"}},
         {"exhaust temperatures jitter cylinder to cylinder", {"jitter", "egt"}}},
        {{"rpm", D::oscillating}, {"fuel_flow", D::oscillating}}, 3,
        "Check ignition leads, plugs and carburettor metering; run a ground power check "
        "before further flight."));

    kb.push_back(entry(
        FaultClass::engine_overspeed,
        "A governor or tachometer drift drives engine speed above the commanded band while "
        "power demand is unchanged.",
        {{"the governor reference drifts upward", {"governor", "drift"}},
         {"engine speed settles above the commanded band", {"overspeed", "engine speed"}},
         {"rpm reads persistently high at unchanged throttle", {"rpm"}},
         {"oil_press runs slightly high with pump speed", {"oil_press", "pump"}}},
        {{"rpm", D::up}, {"oil_press", D::up}}, 4,
        "Reduce power, land and recalibrate the governor linkage; inspect for overspeed "
        "damage per the engine manual."));

    kb.push_back(entry(
        FaultClass::engine_idle_problem,
        "An unstable idle circuit meters fuel unevenly at low frequency; in cruise it shows "
        "as a faint slow flutter, near idle it also dips delivered power.",
        {{"the idle circuit meters unevenly", {"idle circuit", "idle"}},
         {"combustion flutters at a low frequency", {"flutter", "low frequency"}},
         {"rpm and fuel_flow carry a slow periodic component", {"rpm", "fuel_flow"}},
         {"power dips appear when the throttle is brought near idle", {"power dip", "throttle"}}},
        {{"rpm", D::oscillating}, {"fuel_flow", D::oscillating}}, 2,
        "Clean and adjust the idle metering circuit; verify idle mixture rise before "
        "release."));

    kb.push_back(entry(
        FaultClass::in_flight_anomaly,
        "Intermittent ignition or fuel-delivery transients interrupt power for seconds at a "
        "time, recurring irregularly through the flight.",
        {{"ignition or fuel delivery drops out transiently", {"transient", "intermittent"}},
         {"power is interrupted for five to ten seconds at a time", {"interrupt", "power"}},
         {"rpm dips and recovers repeatedly", {"rpm"}},
         {"airspeed sags and the altitude trace wavers", {"indicated_airspeed", "airspeed", "altitude"}}},
        {{"rpm", D::oscillating}, {"indicated_airspeed", D::down}, {"climb_rate", D::oscillating}},
        4,
        "Inspect ignition harness, magneto contacts and fuel delivery for intermittent "
        "faults; download and review the recorded dropouts."));

    kb.push_back(entry(
        FaultClass::engine_requires_maintenance,
        "General wear past the service interval: friction creeps up and cooling margins "
        "erode, all at an extremely low degradation rate that stays near sensor noise.",
        {{"wear accumulates past the service interval", {"wear", "service interval"}},
         {"bearing friction creeps upward slowly", {"friction"}},
         {"cooling margins erode marginally on all cylinders", {"cooling margin", "cooling"}},
         {"oil and head temperatures drift up within sensor noise", {"drift", "within sensor noise"}}},
        {{"oil_temp", D::up}, {"cht1", D::up}}, 1,
        "Schedule routine maintenance: oil change with filter inspection, compression check "
        "and cooling baffle survey."));

    return kb;
}

}  // namespace

const std::vector<FmeaEntry>& fmea_all() {
    static const std::vector<FmeaEntry> kb = build_kb();
    return kb;
}

const FmeaEntry& fmea_lookup(FaultClass fc) {
    if (fc == FaultClass::nominal)
        throw InputError("fmea_lookup: nominal has no FMEA entry");
    for (const auto& e : fmea_all())
        if (e.fault_class == fc) return e;
    throw InputError("fmea_lookup: no entry for " + to_string(fc));
}

static json entry_to_json(const FmeaEntry& e) {
    json steps = json::array();
    for (const auto& s : e.causal_chain)
        steps.push_back({{"text", s.text}, {"keywords", s.keywords}});
    json sensors = json::array();
    for (const auto& s : e.key_sensors)
        sensors.push_back({{"channel", s.channel}, {"direction", to_string(s.direction)}});
    return json{{"fault_class", to_string(e.fault_class)},
                {"mechanism", e.mechanism},
                {"causal_chain", steps},
                {"key_sensors", sensors},
                {"severity_rating", e.severity_rating},
                {"maintenance_recommendation", e.maintenance_recommendation}};
}

std::string export_entry_text(const FmeaEntry& e) {
    std::string out;
    out += "fault_class: " + to_string(e.fault_class) + "\n";
    out += "mechanism: " + e.mechanism + "\n";
    out += "causal_chain:\n";
    for (std::size_t i = 0; i < e.causal_chain.size(); ++i)
        out += "  " + std::to_string(i + 1) + ". " + e.causal_chain[i].text + "\n";
    out += "key_sensors:";
    for (const auto& s : e.key_sensors)
        out += " " + s.channel + "(" + to_string(s.direction) + ")";
    out += "\n";
    out += "severity_rating: " + std::to_string(e.severity_rating) + "\n";
    out += "maintenance_recommendation: " + e.maintenance_recommendation + "\n";
    return out;
}

std::string export_kb(const std::string& format) {
    if (format == "json") {
        json records = json::array();
        for (const auto& e : fmea_all()) records.push_back(entry_to_json(e));
        return json{{"fmea_knowledge_base", records}}.dump(2);
    }
    if (format == "text") {
        std::string out;
        for (const auto& e : fmea_all()) {
            out += export_entry_text(e);
            out += "---\n";
        }
        return out;
    }
    throw InputError("export_kb: unknown format " + format);
}

std::vector<FmeaEntry> parse_kb_json(const std::string& json_text) {
    const json doc = json::parse(json_text);
    std::vector<FmeaEntry> out;
    for (const auto& r : doc.at("fmea_knowledge_base")) {
        FmeaEntry e;
        e.fault_class = fault_class_from_string(r.at("fault_class").get<std::string>());
        e.mechanism = r.at("mechanism").get<std::string>();
        for (const auto& s : r.at("causal_chain"))
            e.causal_chain.push_back(
                {s.at("text").get<std::string>(), s.at("keywords").get<std::vector<std::string>>()});
        for (const auto& s : r.at("key_sensors"))
            e.key_sensors.push_back({s.at("channel").get<std::string>(),
                                     direction_from_string(s.at("direction").get<std::string>())});
        e.severity_rating = r.at("severity_rating").get<int>();
        e.maintenance_recommendation = r.at("maintenance_recommendation").get<std::string>();
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace twindiag::faults
