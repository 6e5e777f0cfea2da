#pragma once

#include <stdexcept>
#include <string>

namespace dnae {

/// Malformed or inconsistent user input: bad shapes, out-of-support parameter
/// vectors, unparseable files. Message names the offending value.
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse: calling backward() before any forward pass, stepping an
/// optimizer with no gradients, reading an unfitted model.
class StateError : public std::logic_error {
public:
    explicit StateError(const std::string& msg) : std::logic_error(msg) {}
};

/// Numerical blow-up during integration or training. Carries the step index
/// at which the state left the trusted region.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, long step) : std::runtime_error(msg), step_index(step) {}
    long step_index;
};

/// Filesystem and serialization failures (missing file, bad magic, truncation).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace dnae
