#include "covidnet/error.hpp"

namespace covidnet {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::DuplicateCode: return "DuplicateCode";
    case ErrorCode::UnknownParent: return "UnknownParent";
    case ErrorCode::LevelMismatch: return "LevelMismatch";
    case ErrorCode::LeafParent: return "LeafParent";
    case ErrorCode::InvalidRegion: return "InvalidRegion";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::MonotonicityViolation: return "MonotonicityViolation";
    case ErrorCode::NonMonotonicPayload: return "NonMonotonicPayload";
    case ErrorCode::NotADecrease: return "NotADecrease";
    case ErrorCode::OutOfOrderDate: return "OutOfOrderDate";
    case ErrorCode::EmptyDateRange: return "EmptyDateRange";
    case ErrorCode::ZeroPopulation: return "ZeroPopulation";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::MalformedPayload: return "MalformedPayload";
    case ErrorCode::EmptyPayload: return "EmptyPayload";
    case ErrorCode::InvalidSource: return "InvalidSource";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::AlreadyBackfilled: return "AlreadyBackfilled";
    case ErrorCode::OutOfOrderArchive: return "OutOfOrderArchive";
    case ErrorCode::FetchFailed: return "FetchFailed";
    case ErrorCode::UnknownTicket: return "UnknownTicket";
    case ErrorCode::AlreadyResolved: return "AlreadyResolved";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NoParentReport: return "NoParentReport";
    case ErrorCode::UnknownIssue: return "UnknownIssue";
    case ErrorCode::MissingLink: return "MissingLink";
    case ErrorCode::MissingRegion: return "MissingRegion";
    case ErrorCode::InvalidTransition: return "InvalidTransition";
    case ErrorCode::Validation: return "Validation";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

} // namespace covidnet
