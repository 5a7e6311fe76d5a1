#pragma once

#include <stdexcept>
#include <string>

namespace hawkesdx {

// Malformed input, bad arguments, violated preconditions.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Not enough events (or users) to proceed. Maps to exit code 2 in the CLI.
class InsufficientData : public Error {
public:
    using Error::Error;
};

} // namespace hawkesdx
