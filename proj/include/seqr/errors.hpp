#pragma once

#include <stdexcept>
#include <string>

namespace seqr {

// Base for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite values, degenerate adapters, empty inputs.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// The library or request is configured in a way the operation does not support
// (e.g. SEQR on a unique-A library).
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

enum class LoadErrorKind {
    BadMagic,
    VersionMismatch,
    Truncated,
    DimensionInconsistent,
    CrcMismatch,
};

inline const char* to_string(LoadErrorKind kind) {
    switch (kind) {
        case LoadErrorKind::BadMagic: return "bad magic";
        case LoadErrorKind::VersionMismatch: return "version mismatch";
        case LoadErrorKind::Truncated: return "truncated";
        case LoadErrorKind::DimensionInconsistent: return "dimension inconsistent";
        case LoadErrorKind::CrcMismatch: return "crc mismatch";
    }
    return "unknown";
}

class LoadError : public IoError {
public:
    LoadError(LoadErrorKind kind, const std::string& detail)
        : IoError(std::string("load error (") + to_string(kind) + "): " + detail), kind_(kind) {}

    LoadErrorKind kind() const noexcept { return kind_; }

private:
    LoadErrorKind kind_;
};

}  // namespace seqr
