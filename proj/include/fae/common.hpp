#pragma once

#include <stdexcept>
#include <string>

namespace fae {

// Error taxonomy shared by all modules. Everything derives from Error so
// callers can catch the whole family at module boundaries.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
    using Error::Error;
};

// Malformed or unparseable input data (wrong rank, NaN voxels, bad magic).
struct FormatError : Error {
    using Error::Error;
};

// Argument outside its documented domain.
struct RangeError : Error {
    using Error::Error;
};

// Violated call contract (shape mismatch, empty input, missing stage).
struct ContractError : Error {
    using Error::Error;
};

// Invalid model/architecture specification.
struct SpecError : Error {
    using Error::Error;
};

// No valid anomaly placement exists for the given foreground.
struct PlacementError : Error {
    using Error::Error;
};

// Training data violated the normal-only contract.
struct DataContractError : Error {
    using Error::Error;
};

// Missing or unloadable backbone weights.
struct InitError : Error {
    using Error::Error;
};

// Experiment configuration rejected at launch.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace fae
