#include "clarify/error.hpp"

#include <utility>

namespace clarify {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::DegenerateVector: return "DegenerateVector";
        case ErrorCode::RetryExhausted: return "RetryExhausted";
        case ErrorCode::ProtocolViolation: return "ProtocolViolation";
        case ErrorCode::UpstreamError: return "UpstreamError";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::ValidationError: return "ValidationError";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::DegenerateDataset: return "DegenerateDataset";
        case ErrorCode::DivergedTraining: return "DivergedTraining";
        case ErrorCode::PromptBudgetExceeded: return "PromptBudgetExceeded";
        case ErrorCode::InvalidTarget: return "InvalidTarget";
        case ErrorCode::JudgeParseError: return "JudgeParseError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

UpstreamError::UpstreamError(int status, const std::string& message)
    : Error(ErrorCode::UpstreamError, "status " + std::to_string(status) + ": " + message),
      status_(status) {}

FormatError::FormatError(std::size_t offset, const std::string& message)
    : Error(ErrorCode::FormatError, message + " (at byte " + std::to_string(offset) + ")"),
      offset_(offset) {}

ValidationError::ValidationError(std::vector<std::size_t> lines, const std::string& message)
    : Error(ErrorCode::ValidationError, message), lines_(std::move(lines)) {}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message), line_(line) {}

JudgeParseError::JudgeParseError(std::string raw, const std::string& message)
    : Error(ErrorCode::JudgeParseError, message), raw_(std::move(raw)) {}

StageError::StageError(std::string stage, ErrorCode cause, const std::string& message)
    : Error(cause, "stage " + stage + ": " + message), stage_(std::move(stage)), cause_(cause) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace clarify
