#pragma once

#include <array>

namespace twindiag {

// Physical intermediate variables produced by the fault engine and consumed
// by the dynamics core and the sensor synthesizer. This is the only conduit
// for fault influence: neither consumer ever sees a fault class.
struct PhysicalEffects {
    std::array<double, 4> cooling_eff{1.0, 1.0, 1.0, 1.0};
    std::array<double, 4> compression_factor{1.0, 1.0, 1.0, 1.0};
    double mixture_offset = 0.0;      // shift of effective mixture command
    double oil_leak_cum = 0.0;        // kg lost so far
    double friction_factor = 1.0;     // >= 1
    double oil_cooler_eff = 1.0;
    double throttle_correction = 1.0; // [0,1], multiplies effective throttle
    double rpm_bias = 0.0;            // rev/min
    double roughness_amp = 0.0;       // compression modulation amplitude

    static PhysicalEffects identity() { return PhysicalEffects{}; }

    bool is_identity() const {
        for (double c : cooling_eff)
            if (c != 1.0) return false;
        for (double c : compression_factor)
            if (c != 1.0) return false;
        return mixture_offset == 0.0 && oil_leak_cum == 0.0 && friction_factor == 1.0 &&
               oil_cooler_eff == 1.0 && throttle_correction == 1.0 && rpm_bias == 0.0 &&
               roughness_amp == 0.0;
    }

    double mean_compression() const {
        return 0.25 * (compression_factor[0] + compression_factor[1] +
                       compression_factor[2] + compression_factor[3]);
    }
};

}  // namespace twindiag
