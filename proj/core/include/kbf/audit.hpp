#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kbf/enroll.hpp"
#include "kbf/oracle.hpp"
#include "kbf/stats.hpp"

namespace kbf {

enum class Verdict { Same, Different };

std::string to_string(Verdict v);

// Per-probe audit record: the discrepancy bit Z_i plus how it arose.
struct ProbeOutcome {
    std::string probe_id;
    bool mismatch = false;
    SlotStatus slot_status = SlotStatus::Missing;
    std::optional<double> answered_value;
    bool transport_failed = false;
};

struct AuditOptions {
    int batch_size = 10;
    int max_in_flight = 4;
    // Fraction of transport-failed slots above which the audit aborts
    // instead of issuing a verdict.
    double abort_transport_fraction = 0.5;
};

struct AuditOutcome {
    long long N = 0;
    long long k = 0;
    double r_disc = 0.0;
    double p_value = 1.0;
    Verdict verdict = Verdict::Same;
    std::vector<ProbeOutcome> per_probe;
    EndpointConfig config_used;
};

struct TwoRoundOutcome {
    long long W1 = 0;
    long long W2 = 0;
    long long T = 0;
    double p_value = 1.0;
    Verdict verdict = Verdict::Same;
    std::vector<std::string> round2_probe_ids;
    AuditOutcome round1;
};

// Single-round audit: every enrolled prompt is sent to the suspect under
// the fingerprint's audit configuration in domain-homogeneous batches;
// missing, unparseable, out-of-range and valid-but-nonmatching answers all
// count as discrepancies. Throws AuditAborted on a whole-audit transport
// collapse.
AuditOutcome audit_once(Endpoint& suspect, const Fingerprint& fp,
                        const DomainRegistry& registry,
                        const stats::CalibrationConfig& cal,
                        const AuditOptions& opts = {});

// Two-round audit: round one as audit_once; round two re-queries exactly
// the round-one mismatching probes (one probe per batch) and counts
// repeated mismatches; T = W1 + W2 is tested against the compound binomial
// null. Round-two transport failures count as repeated mismatches.
TwoRoundOutcome audit_two_round(Endpoint& suspect, const Fingerprint& fp,
                                const DomainRegistry& registry,
                                const stats::CalibrationConfig& cal,
                                const AuditOptions& opts = {});

// Joint per-probe classification: one fresh reference query and one
// substitute query per enrolled probe, each compared to the stored
// consensus. Per-slot failures count as mismatch bits for the failing side.
stats::MismatchTable build_mismatch_table(Endpoint& reference, Endpoint& substitute,
                                          const Fingerprint& fp,
                                          const DomainRegistry& registry,
                                          const AuditOptions& opts = {});

struct McNemarDiagnostic {
    long long b = 0;  // mismatch under suspect only
    long long c = 0;  // mismatch under reference self-test only
    double p_value = 1.0;
};

struct AuditReport {
    std::string fingerprint_identity;
    std::string fingerprint_digest;
    std::string suspect_identity;
    double p0 = 0.0;  // the fingerprint's null bound, echoed for re-verification
    stats::CalibrationConfig calibration;
    std::optional<AuditOutcome> single;
    std::optional<TwoRoundOutcome> two_round;
    std::optional<McNemarDiagnostic> mcnemar;
    std::optional<stats::PiEstimate> pi;
    long long total_tokens = 0;
    std::string timestamp;
};

// Deterministic report assembly. The McNemar diagnostic is filled when the
// fingerprint carries a self-test vector and a single-round outcome exists.
AuditReport assemble_report(const Fingerprint& fp, const std::string& suspect_identity,
                            std::optional<AuditOutcome> single,
                            std::optional<TwoRoundOutcome> two_round,
                            std::optional<stats::PiEstimate> pi,
                            const stats::CalibrationConfig& cal,
                            long long total_tokens, std::string timestamp);

// Structured (machine) and Markdown (human) renderings. The Markdown embeds
// the raw statistical inputs (N, k, p0, gamma, alpha) so a third party can
// re-verify the p-value by hand.
std::string report_to_json(const AuditReport& report);
std::string report_to_markdown(const AuditReport& report);

// Rehydrate a stored structured report (for re-rendering).
AuditReport report_from_json(const std::string& json_text);

// CLI exit-code contract: 0 = SAME, 2 = DIFFERENT (3 = aborted, raised as
// AuditAborted before a report exists).
int report_exit_code(const AuditReport& report);

}  // namespace kbf
