#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace covidnet {

enum class ErrorCode {
    // region-model
    DuplicateCode,
    UnknownParent,
    LevelMismatch,
    LeafParent,
    InvalidRegion,
    NotFound,
    // series-store
    UnknownRegion,
    MonotonicityViolation,
    NonMonotonicPayload,
    NotADecrease,
    OutOfOrderDate,
    EmptyDateRange,
    ZeroPopulation,
    NoData,
    // ingest-adapters
    MalformedPayload,
    EmptyPayload,
    InvalidSource,
    UnknownSource,
    AlreadyBackfilled,
    OutOfOrderArchive,
    FetchFailed,
    // quality-gate
    UnknownTicket,
    AlreadyResolved,
    InvalidConfig,
    // reconciler
    NoParentReport,
    // issue-desk
    UnknownIssue,
    MissingLink,
    MissingRegion,
    InvalidTransition,
    Validation,
    // plumbing
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable error code. Every failure surfaced
/// by the library is an Error; the API maps the code to an HTTP status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace covidnet
