#pragma once

#include <stdexcept>
#include <string>

namespace faqrag {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input record. Line numbers are 1-based; 0 means "not line oriented".
class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Remote endpoint failed after all retry attempts.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int status = 0) : Error(what), status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace faqrag
