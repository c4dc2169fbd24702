#pragma once

#include <stdexcept>
#include <string>

namespace handover {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the subclasses let tests and the CLI
// distinguish error categories.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input shapes or counts do not agree (joint counts, window lengths, ...).
class StructuralError : public Error {
public:
    using Error::Error;
};

// A value violates a documented precondition (non-orthonormal matrix, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Geometrically degenerate input (zero vector, coincident points, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(int line, const std::string& what);
    int line() const noexcept { return line_; }

private:
    int line_;
};

// Tabular input with the wrong columns or values.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Annotation runs that contradict the segment definition.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

// Clip too short to produce a single model window.
class TooShortError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered during evaluation or training.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace handover
