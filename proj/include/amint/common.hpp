#pragma once

#include <stdexcept>
#include <string>

namespace amint {

// Maps to CLI exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset ingestion / integrity problems.
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or contract mismatch between tensors/models.
struct dim_error : std::runtime_error {
    explicit dim_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses, probabilities outside domain, etc.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A guaranteed property was broken at runtime (e.g. frozen parameters moved).
struct invariant_error : std::runtime_error {
    explicit invariant_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace amint
