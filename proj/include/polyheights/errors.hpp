#pragma once

#include <stdexcept>
#include <string>

namespace polyheights {

// Base class for violations of an operation's domain contract.  Conditions
// that the caller is expected to handle as data (budget exhaustion, grid
// instability, obstructed rays) are reported through result flags instead.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct NonCenteredInput : DomainError {
    explicit NonCenteredInput(const std::string& what) : DomainError(what) {}
};

struct ZeroHeight : DomainError {
    explicit ZeroHeight(const std::string& what) : DomainError(what) {}
};

struct DegenerateLift : DomainError {
    explicit DegenerateLift(const std::string& what) : DomainError(what) {}
};

struct NotNormalized : DomainError {
    explicit NotNormalized(const std::string& what) : DomainError(what) {}
};

struct BelowCriticalLevel : DomainError {
    explicit BelowCriticalLevel(const std::string& what) : DomainError(what) {}
};

struct BranchAmbiguity : DomainError {
    explicit BranchAmbiguity(const std::string& what) : DomainError(what) {}
};

struct NotInDomain : DomainError {
    int first_violating_index = -1;
    NotInDomain(const std::string& what, int index)
        : DomainError(what), first_violating_index(index) {}
};

struct LeftDomain : DomainError {
    explicit LeftDomain(const std::string& what) : DomainError(what) {}
};

struct StepTooLarge : DomainError {
    explicit StepTooLarge(const std::string& what) : DomainError(what) {}
};

struct LevelMismatch : DomainError {
    explicit LevelMismatch(const std::string& what) : DomainError(what) {}
};

struct InsufficientDepth : DomainError {
    explicit InsufficientDepth(const std::string& what) : DomainError(what) {}
};

struct TargetOutsideDomain : DomainError {
    explicit TargetOutsideDomain(const std::string& what) : DomainError(what) {}
};

}  // namespace polyheights
