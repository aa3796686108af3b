#pragma once

#include <stdexcept>
#include <string>

namespace otce {

// Bad files, bad flags, violated preconditions. CLI maps these to exit code 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures inside a computation (singular systems, internal invariant broken).
// CLI maps these to exit code 1.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace otce
