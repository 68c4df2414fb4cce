#pragma once

// Internal: domain-homogeneous batched querying with slot bookkeeping.
// Shared by enrollment, self-calibration and auditing so every stage sees
// identical batching, retry and failure semantics.

#include <string>
#include <vector>

#include "kbf/domains.hpp"
#include "kbf/oracle.hpp"
#include "kbf/parse.hpp"

namespace kbf::internal {

struct ProbeAnswer {
    SlotStatus status = SlotStatus::Missing;
    double value = 0.0;
    bool transport_failed = false;
};

// Queries `prompts` (one spec pointer per prompt) in domain-homogeneous
// batches of `batch_size`, in parallel up to `max_in_flight`, and returns
// one answer per input index. An AmbiguousAlignment from the parser re-asks
// the batch exactly once; transport failure after retries marks every slot
// of the batch transport_failed.
std::vector<ProbeAnswer> run_batches(Endpoint& endpoint,
                                     const std::vector<const DomainSpec*>& specs,
                                     const std::vector<std::string>& prompts,
                                     const EndpointConfig& config, int batch_size,
                                     int max_in_flight);

}  // namespace kbf::internal
