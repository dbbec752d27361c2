#pragma once

#include <stdexcept>
#include <string>

namespace remest {

enum class Errc {
    InvalidArgument,
    NonStochasticRow,
    NegativeEntry,
    NotCommunicating,
    ZeroSilenceMass,
    NoConvergence,
    CapExceeded,
    TooLarge,
    ParseError,
    InvariantViolation,
};

inline const char* to_string(Errc code) {
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonStochasticRow: return "NonStochasticRow";
    case Errc::NegativeEntry: return "NegativeEntry";
    case Errc::NotCommunicating: return "NotCommunicating";
    case Errc::ZeroSilenceMass: return "ZeroSilenceMass";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::CapExceeded: return "CapExceeded";
    case Errc::TooLarge: return "TooLarge";
    case Errc::ParseError: return "ParseError";
    case Errc::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

    Errc code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& message() const noexcept { return message_; }

private:
    Errc code_;
    std::string message_;
};

} // namespace remest
