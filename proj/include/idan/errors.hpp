#pragma once

#include <stdexcept>
#include <string>

namespace idan {

// File/parse problems (missing rasters, bad tensor files, broken manifests).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses and other numerical breakdowns.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace idan
