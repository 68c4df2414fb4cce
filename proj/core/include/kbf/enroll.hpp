#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kbf/domains.hpp"
#include "kbf/oracle.hpp"
#include "kbf/parse.hpp"
#include "kbf/stats.hpp"

namespace kbf {

inline constexpr int kFingerprintSchemaVersion = 1;

// Per-domain search bookkeeping. Exclusions grow monotonically; the
// stable-count history has one entry per completed round.
struct DiscoveryState {
    std::string domain_id;
    int tier_index = 0;
    std::vector<std::string> exclusions;         // normalized proposed names
    std::vector<int> stable_count_history;
};

// An enrolled probe: prompt, consensus, and the raw values behind it.
struct Probe {
    std::string id;  // content hash of (domain_id, prompt)
    std::string prompt;
    std::string domain_id;
    std::string subject;
    double consensus_value = 0.0;
    int tier = 0;
    // Reference-consistency provenance: the three check values (t0, t0.7a,
    // t0.7b) and the contrast endpoint's value when screening ran.
    std::vector<double> check_values;
    std::optional<double> contrast_value;
};

std::string probe_id(const std::string& domain_id, const std::string& prompt);

struct Fingerprint {
    std::string reference_identity;
    std::vector<Probe> probes;
    long long k_self = 0;
    double p0 = 0.0;
    double gamma = 0.99;
    EndpointConfig audit_config;
    std::string created_at;
    // 1 = the self-test reproduced the consensus, 0 = discrepancy;
    // k_self equals the number of zero bits.
    std::vector<uint8_t> self_test_vector;

    long long size() const { return static_cast<long long>(probes.size()); }
};

// Content digest over everything except created_at; identical enrollments
// (same seeds, same fixtures) produce identical digests.
std::string fingerprint_digest(const Fingerprint& fp);

void save_fingerprint(const Fingerprint& fp, const std::string& path);
Fingerprint load_fingerprint(const std::string& path, const DomainRegistry& registry);

struct EnrollOptions {
    int candidates_per_round = 20;
    int exclusion_cap = 60;           // most recent names included in prompts
    int batch_size = 10;
    int max_rounds_per_domain = 8;    // tier saturates at the last descriptor
    int max_in_flight = 4;
    bool screen_enabled = true;
    // The screen turns itself off for a reference once it has removed more
    // than this fraction of otherwise-stable candidates, measured after at
    // least screen_min_sample screened candidates.
    double screen_auto_disable_threshold = 0.90;
    int screen_min_sample = 25;
    double check_temperature_a = 0.7;
    double check_temperature_b = 0.7;
    EndpointConfig audit_config;      // temperature 0 canonical
    stats::CalibrationConfig calibration;
    std::string created_at;           // empty -> "deterministic" epoch string
};

// Cumulative contrastive-screen accounting for one reference enrollment.
struct ScreenState {
    long long screened = 0;
    long long dropped = 0;
    bool disabled = false;
};

// One generation round: asks the reference for candidate records, parses
// and range-filters them, drops names already proposed, and extends the
// exclusion list with everything newly proposed.
std::vector<CandidateRecord> propose_candidates(Endpoint& ref, const DomainSpec& spec,
                                                DiscoveryState& state,
                                                const EnrollOptions& opts);

// Reference-consistency outcome for one candidate.
struct CheckOutcome {
    bool survived = false;
    bool screened_out = false;
    double consensus = 0.0;                   // the temperature-0 value
    std::vector<double> check_values;         // filled for survivors
    std::optional<double> contrast_value;
};

// Three-configuration stability check (temperature 0, then two independent
// temperature-0.7 runs). A candidate survives iff all three parsed values
// are domain-valid and pairwise match; consensus is the temperature-0
// value. When a contrast endpoint is given, candidates whose provisional
// value the contrast endpoint reproduces are dropped between the first and
// the remaining checks.
std::vector<CheckOutcome> consistency_check(Endpoint& ref, Endpoint* contrast,
                                            ScreenState* screen,
                                            const std::vector<std::string>& prompts,
                                            const DomainSpec& spec,
                                            const EnrollOptions& opts);

// Single-probe screen decision: drop iff the contrast endpoint's value is
// domain-valid and matches the consensus. Parse failures and oracle errors
// keep the probe.
bool contrastive_screen_keep(Endpoint& contrast, const std::string& prompt,
                             double consensus, const DomainSpec& spec,
                             const EndpointConfig& audit_config);

// Stopping rule: true iff the domain has enrolled at least min_probes in
// total and the last two rounds both yielded zero.
bool stop_domain(const std::vector<int>& history, int min_probes);

struct SelfCalibration {
    long long k_self = 0;
    double p0 = 0.0;
    std::vector<uint8_t> match_vector;
};

// Stage II: re-query every enrolled prompt under the audit configuration in
// standard batches; slots that are invalid, missing or fail the match rule
// count as discrepancies. Oracle failure after retries counts the affected
// slots as discrepancies.
SelfCalibration self_calibrate(Endpoint& ref, const std::vector<Probe>& probes,
                               const DomainRegistry& registry,
                               const EnrollOptions& opts);

// Full Stage I + Stage II construction. Throws EnrollmentFailed when no
// domain yields a stable probe.
Fingerprint enroll(Endpoint& ref, Endpoint* contrast, const DomainRegistry& registry,
                   const EnrollOptions& opts,
                   std::vector<DiscoveryState>* trace = nullptr);

}  // namespace kbf
