#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kbf/domains.hpp"

namespace kbf {

// One `name | value` record from a candidate-generation response.
struct CandidateRecord {
    std::string name;  // normalized
    double value = 0.0;
    std::string raw_line;
};

enum class SlotStatus { Valid, Invalid, Missing };

// Parsing outcome for one slot of a batched numbered response.
//   valid   -> finite value inside the domain range
//   invalid -> a token was recovered but is unparseable or out of range
//   missing -> no numeric token recovered for the slot
struct SlotResult {
    int slot_index = 0;  // 1-based
    SlotStatus status = SlotStatus::Missing;
    double value = 0.0;  // meaningful iff status == Valid
};

// Numeric-token normalization: strips unit symbols, thousands separators and
// approximate-value markers, maps Unicode minus to ASCII, then parses the
// remaining token. nullopt when no numeric token survives.
std::optional<double> normalize_number(const std::string& token);

// All numeric tokens in a fragment, in order of appearance, after marker
// normalization. Bare two-value ranges ("80-90", "80 - 90") yield nothing:
// range answers are not a committed value.
std::vector<double> extract_numbers(const std::string& text);

// Candidate-generation parser: one record per well-formed `name | value`
// line; list markers stripped; duplicate normalized names keep the first
// occurrence; out-of-range values are dropped before any verification query.
std::vector<CandidateRecord> parse_candidate_records(const std::string& text,
                                                     const DomainSpec& spec);

// Position-aware batch parser. Always returns exactly n_slots results in
// slot order. Removes hidden reasoning tags, markdown separators, table
// chrome and empty lines; maps `(N)` numbered answers to slots when the
// response preserves numbering, otherwise falls back to sequential lines;
// per slot extracts the final numeric token, normalizes and range-validates.
// Throws AmbiguousAlignment when numbering is partially present and cannot
// be reconciled with the slot count (the oracle layer re-asks once).
std::vector<SlotResult> parse_batch(const std::string& text, int n_slots,
                                    const DomainSpec& spec);

// Tag pairs treated as hidden reasoning and removed before line splitting.
// Extendable because endpoints do not agree on a delimiter.
struct ParseOptions {
    std::vector<std::pair<std::string, std::string>> reasoning_tags = {
        {"<think>", "</think>"},
        {"<thinking>", "</thinking>"},
        {"<reasoning>", "</reasoning>"},
        {"<thought>", "</thought>"},
    };
};

std::vector<SlotResult> parse_batch(const std::string& text, int n_slots,
                                    const DomainSpec& spec, const ParseOptions& options);

}  // namespace kbf
