#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace twindiag {

// Canonical channel layout: 23 monitored channels followed by 4 control
// channels. Every frame, dataset column, residual row and feature row uses
// this order. rpm is the 10th channel (index 9), heading the last monitored.
enum Channel : int {
    kBusVoltage = 0,
    kAlternatorAmps,
    kBatteryVoltage,
    kBatteryAmps,
    kFuelQty,
    kFuelFlow,
    kFuelPressure,
    kOilTemp,
    kOilPress,
    kRpm,
    kCht1,
    kCht2,
    kCht3,
    kCht4,
    kEgt1,
    kEgt2,
    kEgt3,
    kEgt4,
    kIndicatedAirspeed,
    kAltitude,
    kClimbRate,
    kOutsideAirTemp,
    kHeading,
    kThrottleCmd,
    kMixtureCmd,
    kClimbCmd,
    kHeadingCmd,
};

constexpr int kNumMonitored = 23;
constexpr int kNumControl = 4;
constexpr int kNumChannels = kNumMonitored + kNumControl;

struct ChannelDesc {
    std::string name;
    std::string unit;
    std::string group;   // electrical | fuel | oil | thermo | flight | control
    double noise_sigma;  // measurement noise std dev, channel units
    double range_min;    // physical sensor range, used for the 1%-of-range floor
    double range_max;
    bool monitored;
};

// Fixed 27-entry descriptor table in canonical order.
const std::vector<ChannelDesc>& canonical_channels();

int channel_index(std::string_view name);  // -1 if unknown
inline double channel_range(const ChannelDesc& d) { return d.range_max - d.range_min; }

// 1% of sensor range, the normalization divisor lower bound.
double channel_floor(int channel);

}  // namespace twindiag
