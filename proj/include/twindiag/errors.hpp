#pragma once

#include <stdexcept>
#include <string>

namespace twindiag {

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulationFault : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace twindiag
