#pragma once
// Error taxonomy shared by every module. Each failure carries a stable code
// (used by tests and by the CLI's exit-status mapping) plus the name of the
// module that raised it, so diagnostics read "corpus: duplicate id 'x'".

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dedukt {

enum class Errc {
    // corpus
    SchemaViolation,
    DuplicateId,
    NonContiguousTurns,
    IoError,
    DuplicateCode,
    EmptyBehaviors,
    TooFewCodes,
    UnlabeledItem,
    CountMismatch,
    UnknownId,
    UnknownLabel,
    // textproc
    ExternalTokensMissing,
    DimensionMismatch,
    ZeroVector,
    // forest
    EmptyTrainingSet,
    SingleClass,
    InvalidParams,
    VersionMismatch,
    CorruptModel,
    // refdb
    EmptyRefDb,
    // llm gateway
    AuthError,
    RateLimited,
    ProviderError,
    MockMiss,
    AmbiguousRule,
    // coder
    WrongKind,
    ReferenceCountMismatch,
    IndexOutOfRange,
    ParseFailure,
    MissingRefDb,
    MissingDialogs,
    CountTooLarge,
    // metrics
    MissingGold,
    EmptyEvaluation,
    DegenerateMarginals,
    // cli
    InvalidConfig,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::SchemaViolation: return "SchemaViolation";
        case Errc::DuplicateId: return "DuplicateId";
        case Errc::NonContiguousTurns: return "NonContiguousTurns";
        case Errc::IoError: return "IoError";
        case Errc::DuplicateCode: return "DuplicateCode";
        case Errc::EmptyBehaviors: return "EmptyBehaviors";
        case Errc::TooFewCodes: return "TooFewCodes";
        case Errc::UnlabeledItem: return "UnlabeledItem";
        case Errc::CountMismatch: return "CountMismatch";
        case Errc::UnknownId: return "UnknownId";
        case Errc::UnknownLabel: return "UnknownLabel";
        case Errc::ExternalTokensMissing: return "ExternalTokensMissing";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
        case Errc::SingleClass: return "SingleClass";
        case Errc::InvalidParams: return "InvalidParams";
        case Errc::VersionMismatch: return "VersionMismatch";
        case Errc::CorruptModel: return "CorruptModel";
        case Errc::EmptyRefDb: return "EmptyRefDb";
        case Errc::AuthError: return "AuthError";
        case Errc::RateLimited: return "RateLimited";
        case Errc::ProviderError: return "ProviderError";
        case Errc::MockMiss: return "MockMiss";
        case Errc::AmbiguousRule: return "AmbiguousRule";
        case Errc::WrongKind: return "WrongKind";
        case Errc::ReferenceCountMismatch: return "ReferenceCountMismatch";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::ParseFailure: return "ParseFailure";
        case Errc::MissingRefDb: return "MissingRefDb";
        case Errc::MissingDialogs: return "MissingDialogs";
        case Errc::CountTooLarge: return "CountTooLarge";
        case Errc::MissingGold: return "MissingGold";
        case Errc::EmptyEvaluation: return "EmptyEvaluation";
        case Errc::DegenerateMarginals: return "DegenerateMarginals";
        case Errc::InvalidConfig: return "InvalidConfig";
    }
    return "UnknownError";
}

// Runtime failures map to CLI exit 2; everything else is input validation (exit 1).
inline bool errc_is_runtime(Errc c) {
    switch (c) {
        case Errc::IoError:
        case Errc::AuthError:
        case Errc::RateLimited:
        case Errc::ProviderError:
        case Errc::MockMiss:
            return true;
        default:
            return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string module, const std::string& message)
        : std::runtime_error(module + ": " + message),
          code_(code),
          module_(std::move(module)) {}

    Errc code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }

private:
    Errc code_;
    std::string module_;
};

// Raised when an LLM reply cannot be resolved to exactly one code.
class ReplyParseError : public Error {
public:
    ReplyParseError(std::string reply, std::vector<std::string> candidates)
        : Error(Errc::ParseFailure, "coder",
                "cannot resolve reply to a single code (" +
                    std::to_string(candidates.size()) + " candidates)"),
          reply_(std::move(reply)),
          candidates_(std::move(candidates)) {}

    const std::string& reply() const noexcept { return reply_; }
    const std::vector<std::string>& candidates() const noexcept { return candidates_; }

private:
    std::string reply_;
    std::vector<std::string> candidates_;
};

} // namespace dedukt
