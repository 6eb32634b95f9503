// Shared error types and version tag.

#pragma once

#include <stdexcept>
#include <string>

namespace forestmatch {

inline constexpr const char* kToolVersion = "0.1.0";

// Invalid run configuration or scene/pose specification (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or unreadable data file (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid inputs that do not fit together, e.g. a scene whose
// modality layout differs from the forest's (CLI exit code 4).
class CompatError : public std::runtime_error {
public:
    explicit CompatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched grid dimensions between paired inputs.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace forestmatch
