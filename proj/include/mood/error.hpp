#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mood {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller handed over a value that violates an operation's precondition.
class InputError : public Error {
public:
    using Error::Error;
};

/// Calibration could not be performed (empty or degenerate reference set).
class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Requested feature is not compiled into this build.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Syntactically malformed input. Carries the 1-based line when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed input whose content disagrees with the expected schema or shape.
class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Missing or invalid header line of a logits file.
class HeaderError : public SchemaError {
public:
    using SchemaError::SchemaError;
};

/// Binary container does not start with the expected magic bytes.
class MagicError : public Error {
public:
    using Error::Error;
};

/// Binary payload ended before the declared content.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// An image file could not be decoded.
class DecodeError : public Error {
public:
    using Error::Error;
};

}  // namespace mood
