#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kbf/domains.hpp"
#include "kbf/oracle.hpp"

namespace kbf {

// Deterministic offline stand-in for a model endpoint.
//
// Answer side: each batched audit prompt line is looked up in the answer
// table (keyed by the rendered single-probe prompt). Known probes answer
// their table value; with probability noise_rate per slot the value is
// perturbed so it violates the domain match rule. Unknown probes get a
// refusal line, exercising missing-slot handling.
//
// Generation side: per-domain scripted rounds of `name | value` text; the
// round counter advances on each generation request for that domain and
// exhausted scripts yield an empty response.
class ScriptedOracle : public Oracle {
  public:
    struct DomainScript {
        std::vector<std::string> generation_rounds;
        std::map<std::string, double> answers;  // subject -> value
    };

    ScriptedOracle(std::string identity, const DomainRegistry& registry,
                   double noise_rate = 0.0, uint64_t seed = 0);

    void add_domain_script(const std::string& domain_id, DomainScript script);

    // Register a single answerable probe. `value` is what this endpoint
    // answers; it may differ from another endpoint's value for the same
    // subject, which is how substitute fixtures are built.
    void add_answer(const std::string& domain_id, const std::string& subject, double value);

    // Load the fixture schema used by the CLI (scripted endpoint files).
    static std::shared_ptr<ScriptedOracle> load_file(const std::string& path,
                                                     const DomainRegistry& registry,
                                                     double noise_rate = 0.0,
                                                     uint64_t seed = 0);

    std::string identity() const override { return identity_; }
    Response generate(const Request& req) override;

  private:
    struct PromptAnswer {
        double value;
        const DomainSpec* spec;
    };

    std::string answer_batch(const std::string& prompt, const Request& req);
    std::string answer_generation(const std::string& prompt);
    double perturbed(double value, const DomainSpec& spec, uint64_t stream) const;

    std::string identity_;
    const DomainRegistry& registry_;
    double noise_rate_;
    uint64_t seed_;
    std::map<std::string, DomainScript> scripts_;
    std::map<std::string, PromptAnswer> by_prompt_;
    std::map<std::string, int> round_counters_;
    std::mutex mu_;
};

// Fixed-probability router: each request is independently served by the
// substitute with probability pi, by the reference otherwise. Draws derive
// from (seed, request ordinal) so a concurrent schedule cannot change them.
struct MixedRoutingPolicy {
    double pi = 0.0;
    std::shared_ptr<Oracle> reference;
    std::shared_ptr<Oracle> substitute;
    uint64_t seed = 0;
};

class MixedOracle : public Oracle {
  public:
    explicit MixedOracle(MixedRoutingPolicy policy);

    std::string identity() const override;
    Response generate(const Request& req) override;

    // Routed-to-substitute counter, for concentration tests.
    long long substitute_served() const { return substitute_served_.load(); }

  private:
    MixedRoutingPolicy policy_;
    std::atomic<long long> substitute_served_{0};
};

}  // namespace kbf
