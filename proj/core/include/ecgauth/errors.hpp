#pragma once

#include <stdexcept>
#include <string>

namespace ecgauth {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ingest
struct UnsupportedFormat : Error { using Error::Error; };
struct MalformedHeader : Error { using Error::Error; };
struct TruncatedSignal : Error { using Error::Error; };
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
    std::size_t line_number;
};

// dsp
struct InvalidSpec : Error { using Error::Error; };
struct DegenerateSignal : Error { using Error::Error; };
struct NoPeaksFound : Error { using Error::Error; };

// segment
struct RecordTooShort : Error { using Error::Error; };
struct TooFewBeats : Error { using Error::Error; };

// encoder
struct ShapeMismatch : Error { using Error::Error; };

// persistence
struct IoError : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct ChecksumMismatch : Error { using Error::Error; };

// metric
struct DegenerateVector : Error { using Error::Error; };

// trainer
struct SegmentationFailed : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

// compress
struct AccumulatorOverflow : Error { using Error::Error; };

// authdb
struct ModelMismatch : Error { using Error::Error; };
struct UnknownIdentity : Error { using Error::Error; };

// evalkit
struct InsufficientSubjects : Error { using Error::Error; };

// cli
struct ConfigError : Error { using Error::Error; };

}  // namespace ecgauth
