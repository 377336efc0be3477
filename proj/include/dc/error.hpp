#pragma once

#include <stdexcept>
#include <string>

namespace dc {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input, bad configuration, violated precondition (exit 2).
class InputError : public Error {
public:
    using Error::Error;
};

// Tensor shape disagreement. Counts as an input error.
class ShapeError : public InputError {
public:
    using InputError::InputError;
};

// NaN/Inf encountered, divergence (exit 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

// Checkpoints or artifacts built against different vocabularies (exit 4).
class IncompatibleError : public Error {
public:
    using Error::Error;
};

} // namespace dc
