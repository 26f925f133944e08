#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ffdalign {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad shapes, out-of-range arguments, malformed files.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite or diverging loss. `iteration` is the step at which it was detected.
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::size_t iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

} // namespace ffdalign
