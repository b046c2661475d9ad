#pragma once

#include <stdexcept>
#include <string>

namespace autood {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/graph shape rule violated at construction or bind time.
struct ShapeError : Error {
    using Error::Error;
};

// A forward/backward pass produced a non-finite value, or an optimizer
// was fed a NaN gradient.
struct NumericError : Error {
    using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// On-disk format problems (checkpoints, IDX files, manifests).
struct FormatError : Error {
    using Error::Error;
};

// Invalid run configuration.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace autood
