#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace advdet {

enum class ErrorCode {
    ShapeMismatch,
    InvalidSpec,
    NonFiniteLoss,
    NotCorrectlyClassified,
    NoAdmissiblePair,
    Divergence,
    EmptyInput,
    EmptyClass,
    InvalidGrid,
    UnknownClass,
    DegenerateFeature,
    SingleClass,
    MissingSet,
    EmptyValidation,
    BadMagic,
    CountMismatch,
    TruncatedFile,
    RaggedRows,
    OutOfRangePixel,
    TooLarge,
    ParseError,
    IoError,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Every module reports failures through this exception; `code()` is the
/// machine-readable part, `what()` carries the human-readable context.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace advdet
