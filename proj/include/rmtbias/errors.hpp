// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rmtbias {

// Invalid user input: bad dimensions, parameter domains, malformed configs.
// The CLI maps this to exit code 2.
class config_error : public std::invalid_argument {
public:
    explicit config_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failure at runtime: iteration limits, degenerate determinants,
// cancellation in finite differences. The CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rmtbias
