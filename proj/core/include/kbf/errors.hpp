#pragma once

#include <stdexcept>
#include <string>

namespace kbf {

// Configuration / file-format problems (bad registry, bad config, bad CLI input).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Transport-level failure that survived the retry policy.
struct TransportFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The endpoint answered with a semantic refusal (HTTP 4xx); not retryable.
struct RefusedByPolicy : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The configured token budget for an endpoint is exhausted.
struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Replay endpoint was asked for a request that is not in the cassette.
struct ReplayMiss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Batch response numbering is partially present and cannot be aligned to
// slots; the oracle layer re-asks the batch once before giving up.
struct AmbiguousAlignment : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stage I produced no stable probes across all domains.
struct EnrollmentFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// More than half of the audited slots failed at the transport level; no
// verdict can be issued.
struct AuditAborted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace kbf
