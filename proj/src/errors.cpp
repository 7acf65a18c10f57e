#include "advdet/errors.hpp"

namespace advdet {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::NotCorrectlyClassified: return "NotCorrectlyClassified";
        case ErrorCode::NoAdmissiblePair: return "NoAdmissiblePair";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::InvalidGrid: return "InvalidGrid";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::DegenerateFeature: return "DegenerateFeature";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::MissingSet: return "MissingSet";
        case ErrorCode::EmptyValidation: return "EmptyValidation";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::RaggedRows: return "RaggedRows";
        case ErrorCode::OutOfRangePixel: return "OutOfRangePixel";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace advdet
