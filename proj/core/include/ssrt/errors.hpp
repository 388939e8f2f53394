#pragma once

#include <stdexcept>
#include <string>

namespace ssrt {

/// Malformed or inconsistent external data (files, manifests, shapes on disk).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or failed numerical checks.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ssrt
