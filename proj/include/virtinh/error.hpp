#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace virtinh {

using Addr = std::uint64_t;

enum class Errc {
    UnsupportedFormat,
    MalformedContainer,
    WordSizeMismatch,
    OutOfBounds,
    Misaligned,
    DecodeStall,
    GrammarError,
    NoPrimaryFound,
    InvalidVtt,
    AmbiguousBucket,
    OrphanConstruction,
    PartialSummary,
    UnresolvedTarget,
    MissingVbptr,
    CycleDetected,
    ParseError,
    UnmappedClass,
    ConfigError,
    OrphanSecondary,
    RelaxedPredicate,
    Io,
};

constexpr std::string_view to_string(Errc e) {
    switch (e) {
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::MalformedContainer: return "MalformedContainer";
    case Errc::WordSizeMismatch: return "WordSizeMismatch";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::Misaligned: return "Misaligned";
    case Errc::DecodeStall: return "DecodeStall";
    case Errc::GrammarError: return "GrammarError";
    case Errc::NoPrimaryFound: return "NoPrimaryFound";
    case Errc::InvalidVtt: return "InvalidVtt";
    case Errc::AmbiguousBucket: return "AmbiguousBucket";
    case Errc::OrphanConstruction: return "OrphanConstruction";
    case Errc::PartialSummary: return "PartialSummary";
    case Errc::UnresolvedTarget: return "UnresolvedTarget";
    case Errc::MissingVbptr: return "MissingVbptr";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::ParseError: return "ParseError";
    case Errc::UnmappedClass: return "UnmappedClass";
    case Errc::ConfigError: return "ConfigError";
    case Errc::OrphanSecondary: return "OrphanSecondary";
    case Errc::RelaxedPredicate: return "RelaxedPredicate";
    case Errc::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// Non-fatal finding attached to an analysis pass.
struct Diagnostic {
    Errc code;
    Addr addr = 0;
    std::string detail;

    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

inline std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string signed_hex(std::int64_t v) {
    if (v < 0)
        return "-" + hex(static_cast<std::uint64_t>(0) - static_cast<std::uint64_t>(v));
    return hex(static_cast<std::uint64_t>(v));
}

} // namespace virtinh
