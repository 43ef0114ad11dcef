#pragma once

#include <string>
#include <vector>

#include "twindiag/faults.hpp"

namespace twindiag::faults {

enum class Direction { up, down, oscillating };

const std::string& to_string(Direction d);
Direction direction_from_string(const std::string& s);

struct CausalStep {
    std::string text;
    std::vector<std::string> keywords;  // any match counts the step as covered
};

struct KeySensor {
    std::string channel;  // canonical channel name
    Direction direction = Direction::up;
};

struct FmeaEntry {
    FaultClass fault_class = FaultClass::nominal;
    std::string mechanism;
    std::vector<CausalStep> causal_chain;  // >= 3 steps
    std::vector<KeySensor> key_sensors;
    int severity_rating = 1;  // 1..5
    std::string maintenance_recommendation;
};

// Static entry for a non-nominal class; throws InputError for nominal.
const FmeaEntry& fmea_lookup(FaultClass fc);

// All 19 entries in class order.
const std::vector<FmeaEntry>& fmea_all();

// Structured export: the same document serves as prompt context and as the
// scoring reference. Formats: "json" and "text".
std::string export_kb(const std::string& format);
std::string export_entry_text(const FmeaEntry& e);

// Parses the JSON form back; used to validate round-tripping.
std::vector<FmeaEntry> parse_kb_json(const std::string& json_text);

}  // namespace twindiag::faults
