#pragma once

#include <stdexcept>
#include <string>

namespace adaptsde {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument or precondition violation (maps to a usage error in the CLI).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// A stepper was handed a system in the wrong calculus.
class FormulationMismatch : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// A required input (H, z, second-order action) was not provided.
class MissingInput : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// Requested dyadic depth is beyond the configured maximum.
class ResolutionExhausted : public Error {
public:
    explicit ResolutionExhausted(const std::string& what)
        : Error("resolution exhausted: " + what) {}
};

/// A trajectory produced inf/nan.
class NonFiniteState : public Error {
public:
    using Error::Error;
};

/// Too many samples of an experiment were flagged non-finite.
class ExperimentFailed : public Error {
public:
    using Error::Error;
};

}  // namespace adaptsde
