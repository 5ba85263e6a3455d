#pragma once

#include <stdexcept>
#include <string>

namespace tplscan {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input was structurally valid up to some point, then ran out of bytes.
struct PartialParseError : ParseError {
    using ParseError::ParseError;
};

// A document violated its schema (wrong type, missing field, bad shape).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cross-reference or checksum failure in otherwise well-formed data.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension mismatch between a model and its input.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace tplscan
