#pragma once

#include <stdexcept>
#include <string>

namespace gnnformer {

/// Root of every error the library throws. Each subclass maps to one failure
/// category so that callers (the CLI in particular) can pick an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A configuration value is out of range or illegal.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input is structurally valid but mathematically degenerate (empty mask,
/// fully masked softmax row, edgeless graph, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. backward on a non-scalar or twice on one tape.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Graph construction received an invalid edge or node index.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed file or config text.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Problem too large for a dense algorithm.
class CapacityError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace gnnformer
