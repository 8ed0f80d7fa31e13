#pragma once

#include <stdexcept>
#include <string>

namespace tsi {

// Error families map one-to-one onto CLI exit codes (see tools/).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

struct CompatError : std::runtime_error {
    explicit CompatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tsi
