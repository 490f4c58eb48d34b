#pragma once

#include <stdexcept>
#include <string>

namespace cgd {

// Error taxonomy shared by the library, the C API and the CLI.
// Usage maps to process exit code 1, Data to 2, Numeric to 3.
enum class ErrorKind {
    Usage = 1,   // bad configuration or invalid request
    Data = 2,    // malformed files, shape mismatches, degenerate inputs
    Numeric = 3, // numerical failure (divergence, undefined metric)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

} // namespace cgd
