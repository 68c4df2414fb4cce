#pragma once

#include <string>
#include <vector>

#include "kbf/domains.hpp"

namespace kbf {

// Fixed recall system prompt used for every audit-format request.
inline constexpr const char* kRecallSystemPrompt =
    "Follow the user's instructions exactly. Output only what is requested.";

// Leading line of every candidate-generation request; scripted endpoints
// key off it to tell generation from recall traffic.
inline constexpr const char* kGenerationTaskPrefix = "TASK: Propose";

// Batched recall request: the recall task header followed by `(N)` numbered
// cloze prompts, one per line. Slot numbers are batch-local 1..n.
std::string render_batch_prompt(const std::vector<std::string>& probe_prompts);

// Candidate-generation request: domain theme, difficulty tier, a capped
// exclusion list and the `name | value` format instruction.
std::string render_generation_prompt(const DomainSpec& spec, const std::string& tier,
                                     const std::vector<std::string>& exclusions,
                                     int records_requested);

// Number of probes per audit-format request; batches are domain-homogeneous.
inline constexpr int kDefaultBatchSize = 10;

}  // namespace kbf
