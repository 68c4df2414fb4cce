#include "batch_runner.hpp"

#include <map>
#include <stdexcept>

#include "kbf/errors.hpp"
#include "kbf/prompts.hpp"

namespace kbf::internal {

namespace {

struct Batch {
    const DomainSpec* spec = nullptr;
    std::vector<std::size_t> indices;  // into the caller's prompt vector
};

}  // namespace

std::vector<ProbeAnswer> run_batches(Endpoint& endpoint,
                                     const std::vector<const DomainSpec*>& specs,
                                     const std::vector<std::string>& prompts,
                                     const EndpointConfig& config, int batch_size,
                                     int max_in_flight) {
    if (specs.size() != prompts.size()) {
        throw std::invalid_argument("run_batches: specs/prompts size mismatch");
    }
    if (batch_size < 1) throw std::invalid_argument("run_batches: batch_size must be >= 1");

    // Group by domain, preserving first-seen order, then chunk.
    std::vector<Batch> batches;
    std::map<std::string, std::vector<std::size_t>> by_domain;
    std::vector<std::string> domain_order;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        auto& bucket = by_domain[specs[i]->id];
        if (bucket.empty()) domain_order.push_back(specs[i]->id);
        bucket.push_back(i);
    }
    for (const auto& id : domain_order) {
        const auto& bucket = by_domain[id];
        for (std::size_t off = 0; off < bucket.size(); off += static_cast<std::size_t>(batch_size)) {
            Batch b;
            b.indices.assign(bucket.begin() + static_cast<std::ptrdiff_t>(off),
                             bucket.begin() + static_cast<std::ptrdiff_t>(
                                                  std::min(off + static_cast<std::size_t>(batch_size),
                                                           bucket.size())));
            b.spec = specs[b.indices.front()];
            batches.push_back(std::move(b));
        }
    }

    // Ordinals reserved in batch order before any dispatch; an ambiguity
    // re-ask consumes the second reserved slot.
    std::vector<std::pair<uint64_t, uint64_t>> ordinals;
    ordinals.reserve(batches.size());
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const uint64_t first = endpoint.reserve_ordinal();
        const uint64_t retry = endpoint.reserve_ordinal();
        ordinals.emplace_back(first, retry);
    }

    std::vector<ProbeAnswer> answers(prompts.size());
    parallel_for_ordered(batches.size(), max_in_flight, [&](std::size_t bi) {
        const Batch& batch = batches[bi];
        std::vector<std::string> batch_prompts;
        batch_prompts.reserve(batch.indices.size());
        for (std::size_t idx : batch.indices) batch_prompts.push_back(prompts[idx]);
        const std::string prompt = render_batch_prompt(batch_prompts);
        const int n_slots = static_cast<int>(batch.indices.size());

        std::vector<SlotResult> slots;
        bool transport_failed = false;
        try {
            std::string text = endpoint.query(prompt, config, ordinals[bi].first);
            try {
                slots = parse_batch(text, n_slots, *batch.spec);
            } catch (const AmbiguousAlignment&) {
                // one re-ask of the same batch
                text = endpoint.query(prompt, config, ordinals[bi].second);
                try {
                    slots = parse_batch(text, n_slots, *batch.spec);
                } catch (const AmbiguousAlignment&) {
                    slots.clear();  // still ambiguous: all slots missing
                }
            }
        } catch (const TransportFailure&) {
            transport_failed = true;
        } catch (const RefusedByPolicy&) {
            transport_failed = true;
        }

        for (std::size_t s = 0; s < batch.indices.size(); ++s) {
            ProbeAnswer& a = answers[batch.indices[s]];
            a.transport_failed = transport_failed;
            if (s < slots.size()) {
                a.status = slots[s].status;
                a.value = slots[s].value;
            } else {
                a.status = SlotStatus::Missing;
            }
        }
    });
    return answers;
}

}  // namespace kbf::internal
