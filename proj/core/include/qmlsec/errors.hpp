#pragma once

#include <stdexcept>
#include <string>

namespace qmlsec {

// Error categories map onto CLI exit codes: ConfigError -> 2, DataError -> 3,
// anything else -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::runtime_error {
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace qmlsec
