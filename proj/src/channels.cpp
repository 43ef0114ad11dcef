#include "twindiag/channels.hpp"

namespace twindiag {

const std::vector<ChannelDesc>& canonical_channels() {
    static const std::vector<ChannelDesc> table = {
        // electrical (4)
        {"bus_voltage", "V", "electrical", 0.05, 0.0, 16.0, true},
        {"alternator_amps", "A", "electrical", 0.30, 0.0, 60.0, true},
        {"battery_voltage", "V", "electrical", 0.05, 0.0, 16.0, true},
        {"battery_amps", "A", "electrical", 0.30, -60.0, 60.0, true},
        // fuel (3)
        {"fuel_qty", "kg", "fuel", 0.15, 0.0, 144.0, true},
        {"fuel_flow", "kg/h", "fuel", 0.25, 0.0, 40.0, true},
        {"fuel_pressure", "kPa", "fuel", 0.35, 0.0, 50.0, true},
        // oil (2)
        {"oil_temp", "C", "oil", 0.50, -10.0, 150.0, true},
        {"oil_press", "kPa", "oil", 2.00, 0.0, 700.0, true},
        // engine thermodynamics (9)
        {"rpm", "rev/min", "thermo", 8.00, 0.0, 3000.0, true},
        {"cht1", "C", "thermo", 1.00, -50.0, 350.0, true},
        {"cht2", "C", "thermo", 1.00, -50.0, 350.0, true},
        {"cht3", "C", "thermo", 1.00, -50.0, 350.0, true},
        {"cht4", "C", "thermo", 1.00, -50.0, 350.0, true},
        {"egt1", "C", "thermo", 2.50, 200.0, 1100.0, true},
        {"egt2", "C", "thermo", 2.50, 200.0, 1100.0, true},
        {"egt3", "C", "thermo", 2.50, 200.0, 1100.0, true},
        {"egt4", "C", "thermo", 2.50, 200.0, 1100.0, true},
        // flight parameters (5)
        {"indicated_airspeed", "kts", "flight", 0.50, 0.0, 180.0, true},
        {"altitude", "ft", "flight", 2.00, 0.0, 20000.0, true},
        {"climb_rate", "ft/min", "flight", 5.00, -2000.0, 2000.0, true},
        {"outside_air_temp", "C", "flight", 0.30, -60.0, 50.0, true},
        {"heading", "deg", "flight", 0.20, 0.0, 360.0, true},
        // control inputs (4), recorded noise-free
        {"throttle_cmd", "frac", "control", 0.0, 0.0, 1.0, false},
        {"mixture_cmd", "frac", "control", 0.0, 0.0, 1.0, false},
        {"climb_cmd", "norm", "control", 0.0, -1.0, 1.0, false},
        {"heading_cmd", "norm", "control", 0.0, -1.0, 1.0, false},
    };
    return table;
}

int channel_index(std::string_view name) {
    const auto& table = canonical_channels();
    for (std::size_t i = 0; i < table.size(); ++i)
        if (table[i].name == name) return static_cast<int>(i);
    return -1;
}

double channel_floor(int channel) {
    const auto& d = canonical_channels().at(static_cast<std::size_t>(channel));
    return 0.01 * channel_range(d);
}

}  // namespace twindiag
