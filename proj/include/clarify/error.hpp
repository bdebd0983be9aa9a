#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clarify {

enum class ErrorCode {
    InvalidArgument,
    InvalidInput,
    InvalidRequest,
    ConfigError,
    DimensionMismatch,
    DegenerateVector,
    RetryExhausted,
    ProtocolViolation,
    UpstreamError,
    Timeout,
    FormatError,
    ParseError,
    ValidationError,
    NotFound,
    EmptyGraph,
    DegenerateDataset,
    DivergedTraining,
    PromptBudgetExceeded,
    InvalidTarget,
    JudgeParseError,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the engine. The code is the
/// stable, machine-checkable part; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Non-2xx reply from an upstream model service.
class UpstreamError : public Error {
public:
    UpstreamError(int status, const std::string& message);

    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Binary file could not be decoded; offset is the byte position of the fault.
class FormatError : public Error {
public:
    FormatError(std::size_t offset, const std::string& message);

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Input stream failed validation; lines are 1-based line numbers.
class ValidationError : public Error {
public:
    ValidationError(std::vector<std::size_t> lines, const std::string& message);

    const std::vector<std::size_t>& lines() const noexcept { return lines_; }

private:
    std::vector<std::size_t> lines_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message);

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Judge reply that does not contain exactly one well-formed, in-range score.
class JudgeParseError : public Error {
public:
    JudgeParseError(std::string raw, const std::string& message);

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// A failure inside one pipeline stage, tagged with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, ErrorCode cause, const std::string& message);

    const std::string& stage() const noexcept { return stage_; }
    ErrorCode cause() const noexcept { return cause_; }

private:
    std::string stage_;
    ErrorCode cause_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace clarify
