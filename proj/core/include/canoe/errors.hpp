#pragma once

#include <stdexcept>
#include <string>

namespace canoe {

// Root of the library's error hierarchy. Subsystems derive more specific
// types; callers that only need "did it work" can catch this one.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data (malformed file, malformed record). Carries an optional
// 1-based line number when the source is line-oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

// A request asked for more than the source can supply.
class CapacityError : public Error {
public:
    using Error::Error;
};

// A numeric operation produced a non-finite result.
class NumericError : public Error {
public:
    using Error::Error;
};

// Configuration is missing, unresolvable, or self-contradictory.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A required resource file is missing or fails its integrity check.
class ResourceError : public Error {
public:
    using Error::Error;
};

}  // namespace canoe
