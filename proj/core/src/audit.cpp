#include "kbf/audit.hpp"

#include <sstream>

#include <json.hpp>

#include "batch_runner.hpp"
#include "kbf/errors.hpp"
#include "kbf/text.hpp"

namespace kbf {

std::string to_string(Verdict v) {
    return v == Verdict::Same ? "SAME" : "DIFFERENT";
}

namespace {

struct QueryPass {
    std::vector<ProbeOutcome> outcomes;
    long long mismatches = 0;
    long long transport_failures = 0;
};

// One pass over a probe subset: query, parse, compare to consensus.
QueryPass run_pass(Endpoint& endpoint, const std::vector<const Probe*>& probes,
                   const DomainRegistry& registry, const EndpointConfig& config,
                   const AuditOptions& opts, int batch_size) {
    std::vector<const DomainSpec*> specs;
    std::vector<std::string> prompts;
    specs.reserve(probes.size());
    prompts.reserve(probes.size());
    for (const Probe* p : probes) {
        specs.push_back(&registry.at(p->domain_id));
        prompts.push_back(p->prompt);
    }
    const auto answers = internal::run_batches(endpoint, specs, prompts, config, batch_size,
                                               opts.max_in_flight);

    QueryPass pass;
    pass.outcomes.resize(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
        ProbeOutcome& out = pass.outcomes[i];
        out.probe_id = probes[i]->id;
        out.slot_status = answers[i].status;
        out.transport_failed = answers[i].transport_failed;
        if (answers[i].status == SlotStatus::Valid) {
            out.answered_value = answers[i].value;
            out.mismatch = !match_value(specs[i]->match_rule, probes[i]->consensus_value,
                                        answers[i].value);
        } else {
            // missing, unparseable and out-of-range all count as discrepancies
            out.mismatch = true;
        }
        if (out.mismatch) ++pass.mismatches;
        if (out.transport_failed) ++pass.transport_failures;
    }
    return pass;
}

void check_abort(const QueryPass& pass, std::size_t total, const AuditOptions& opts) {
    if (total == 0) return;
    const double failed_fraction =
        static_cast<double>(pass.transport_failures) / static_cast<double>(total);
    if (failed_fraction > opts.abort_transport_fraction) {
        throw AuditAborted("transport failed on " + std::to_string(pass.transport_failures) +
                           " of " + std::to_string(total) + " probes; no verdict");
    }
}

}  // namespace

AuditOutcome audit_once(Endpoint& suspect, const Fingerprint& fp, const DomainRegistry& registry,
                        const stats::CalibrationConfig& cal, const AuditOptions& opts) {
    if (fp.probes.empty()) throw std::invalid_argument("audit_once: empty fingerprint");

    std::vector<const Probe*> probes;
    probes.reserve(fp.probes.size());
    for (const auto& p : fp.probes) probes.push_back(&p);

    QueryPass pass = run_pass(suspect, probes, registry, fp.audit_config, opts, opts.batch_size);
    check_abort(pass, probes.size(), opts);

    AuditOutcome out;
    out.N = fp.size();
    out.k = pass.mismatches;
    out.r_disc = static_cast<double>(out.k) / static_cast<double>(out.N);
    out.p_value = stats::binom_tail_pvalue(out.k, out.N, fp.p0);
    out.verdict = out.p_value < cal.alpha ? Verdict::Different : Verdict::Same;
    out.per_probe = std::move(pass.outcomes);
    out.config_used = fp.audit_config;
    return out;
}

TwoRoundOutcome audit_two_round(Endpoint& suspect, const Fingerprint& fp,
                                const DomainRegistry& registry,
                                const stats::CalibrationConfig& cal, const AuditOptions& opts) {
    TwoRoundOutcome out;
    out.round1 = audit_once(suspect, fp, registry, cal, opts);
    out.W1 = out.round1.k;

    std::vector<const Probe*> requery;
    for (std::size_t i = 0; i < fp.probes.size(); ++i) {
        if (out.round1.per_probe[i].mismatch) {
            requery.push_back(&fp.probes[i]);
            out.round2_probe_ids.push_back(fp.probes[i].id);
        }
    }

    if (!requery.empty()) {
        // each re-queried probe goes in its own single-probe batch
        QueryPass pass = run_pass(suspect, requery, registry, fp.audit_config, opts, 1);
        out.W2 = pass.mismatches;
    }
    out.T = out.W1 + out.W2;
    out.p_value = stats::two_round_null_pvalue(out.T, fp.size(), fp.p0);
    out.verdict = out.p_value < cal.alpha ? Verdict::Different : Verdict::Same;
    return out;
}

stats::MismatchTable build_mismatch_table(Endpoint& reference, Endpoint& substitute,
                                          const Fingerprint& fp, const DomainRegistry& registry,
                                          const AuditOptions& opts) {
    std::vector<const Probe*> probes;
    probes.reserve(fp.probes.size());
    for (const auto& p : fp.probes) probes.push_back(&p);

    const QueryPass ref_pass =
        run_pass(reference, probes, registry, fp.audit_config, opts, opts.batch_size);
    const QueryPass sub_pass =
        run_pass(substitute, probes, registry, fp.audit_config, opts, opts.batch_size);

    stats::MismatchTable table;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const bool a = ref_pass.outcomes[i].mismatch;
        const bool b = sub_pass.outcomes[i].mismatch;
        if (!a && !b) ++table.n00;
        if (!a && b) ++table.n01;
        if (a && !b) ++table.n10;
        if (a && b) ++table.n11;
    }
    return table;
}

AuditReport assemble_report(const Fingerprint& fp, const std::string& suspect_identity,
                            std::optional<AuditOutcome> single,
                            std::optional<TwoRoundOutcome> two_round,
                            std::optional<stats::PiEstimate> pi,
                            const stats::CalibrationConfig& cal, long long total_tokens,
                            std::string timestamp) {
    if (!single && !two_round) {
        throw std::invalid_argument("assemble_report: at least one outcome is required");
    }
    AuditReport report;
    report.fingerprint_identity = fp.reference_identity;
    report.fingerprint_digest = fingerprint_digest(fp);
    report.suspect_identity = suspect_identity;
    report.p0 = fp.p0;
    report.calibration = cal;
    report.single = std::move(single);
    report.two_round = std::move(two_round);
    report.pi = std::move(pi);
    report.total_tokens = total_tokens;
    report.timestamp = std::move(timestamp);

    const AuditOutcome* outcome =
        report.single ? &*report.single : &report.two_round->round1;
    if (!fp.self_test_vector.empty() &&
        fp.self_test_vector.size() == outcome->per_probe.size()) {
        McNemarDiagnostic mc;
        for (std::size_t i = 0; i < outcome->per_probe.size(); ++i) {
            const bool self_mismatch = fp.self_test_vector[i] == 0;
            const bool suspect_mismatch = outcome->per_probe[i].mismatch;
            if (suspect_mismatch && !self_mismatch) ++mc.b;
            if (!suspect_mismatch && self_mismatch) ++mc.c;
        }
        mc.p_value = stats::mcnemar_exact(mc.b, mc.c);
        report.mcnemar = mc;
    }
    return report;
}

namespace {

nlohmann::ordered_json outcome_to_json(const AuditOutcome& o) {
    nlohmann::ordered_json j;
    j["N"] = o.N;
    j["k"] = o.k;
    j["r_disc"] = o.r_disc;
    j["p_value"] = o.p_value;
    j["verdict"] = to_string(o.verdict);
    nlohmann::ordered_json bits = nlohmann::ordered_json::array();
    for (const auto& p : o.per_probe) bits.push_back(p.mismatch ? 1 : 0);
    j["per_probe_mismatch"] = bits;
    nlohmann::ordered_json failed = nlohmann::ordered_json::array();
    for (const auto& p : o.per_probe) {
        if (p.transport_failed) failed.push_back(p.probe_id);
    }
    j["transport_failed_probes"] = failed;
    return j;
}

}  // namespace

std::string report_to_json(const AuditReport& report) {
    nlohmann::ordered_json j;
    j["kind"] = "kbf-audit-report";
    j["schema_version"] = 1;
    j["reference_identity"] = report.fingerprint_identity;
    j["fingerprint_digest"] = report.fingerprint_digest;
    j["suspect_identity"] = report.suspect_identity;
    j["p0"] = report.p0;
    j["gamma"] = report.calibration.gamma;
    j["alpha"] = report.calibration.alpha;
    if (report.single) j["audit"] = outcome_to_json(*report.single);
    if (report.two_round) {
        nlohmann::ordered_json t;
        t["W1"] = report.two_round->W1;
        t["W2"] = report.two_round->W2;
        t["T"] = report.two_round->T;
        t["p_value"] = report.two_round->p_value;
        t["verdict"] = to_string(report.two_round->verdict);
        t["round2_probe_ids"] = report.two_round->round2_probe_ids;
        t["round1"] = outcome_to_json(report.two_round->round1);
        j["two_round"] = t;
    }
    if (report.mcnemar) {
        j["mcnemar"] = {{"b", report.mcnemar->b},
                        {"c", report.mcnemar->c},
                        {"p_value", report.mcnemar->p_value}};
    }
    if (report.pi) {
        nlohmann::ordered_json p;
        if (report.pi->point) p["point"] = *report.pi->point;
        if (report.pi->se) p["se"] = *report.pi->se;
        if (report.pi->interval_lo) {
            p["interval"] = {*report.pi->interval_lo, *report.pi->interval_hi};
        }
        p["double_root"] = report.pi->double_root;
        p["clipped"] = report.pi->clipped;
        p["unidentifiable"] = report.pi->unidentifiable;
        j["pi_estimate"] = p;
    }
    j["total_tokens"] = report.total_tokens;
    j["timestamp"] = report.timestamp;
    return j.dump(2) + "\n";
}

std::string report_to_markdown(const AuditReport& report) {
    std::ostringstream md;
    md << "# Endpoint audit report\n\n";
    md << "- Reference: `" << report.fingerprint_identity << "`\n";
    md << "- Fingerprint digest: `" << report.fingerprint_digest << "`\n";
    md << "- Suspect: `" << report.suspect_identity << "`\n";
    md << "- Null bound p0 = " << format_double(report.p0)
       << ", gamma = " << format_double(report.calibration.gamma)
       << ", alpha = " << format_double(report.calibration.alpha) << "\n";
    if (!report.timestamp.empty()) md << "- Timestamp: " << report.timestamp << "\n";
    md << "\n";

    if (report.single) {
        const auto& o = *report.single;
        md << "## Single-round audit\n\n";
        md << "| N | k | r_disc | p-value | verdict |\n";
        md << "|---|---|--------|---------|---------|\n";
        md << "| " << o.N << " | " << o.k << " | " << format_double(o.r_disc) << " | "
           << format_double(o.p_value) << " | " << to_string(o.verdict) << " |\n\n";
        md << "The p-value is the one-sided binomial tail P(X >= k) for X ~ "
              "Binomial(N, p0) with the fingerprint's null bound; verify with the "
              "inputs above.\n\n";
    }
    if (report.two_round) {
        const auto& t = *report.two_round;
        md << "## Two-round audit\n\n";
        md << "| W1 | W2 | T | p-value | verdict |\n";
        md << "|----|----|---|---------|---------|\n";
        md << "| " << t.W1 << " | " << t.W2 << " | " << t.T << " | "
           << format_double(t.p_value) << " | " << to_string(t.verdict) << " |\n\n";
    }
    if (report.mcnemar) {
        md << "## McNemar diagnostic\n\n";
        md << "Discordant pairs b/c = " << report.mcnemar->b << "/" << report.mcnemar->c
           << ", exact two-sided p = " << format_double(report.mcnemar->p_value)
           << " (auxiliary; the verdict above is the primary decision).\n\n";
    }
    if (report.pi) {
        md << "## Routed-fraction estimate\n\n";
        if (report.pi->point) {
            md << "- Point estimate: " << format_double(*report.pi->point);
            if (report.pi->se) md << " (se " << format_double(*report.pi->se) << ")";
            md << "\n";
        }
        if (report.pi->interval_lo) {
            md << "- Candidate-pool interval: [" << format_double(*report.pi->interval_lo)
               << ", " << format_double(*report.pi->interval_hi) << "]\n";
        }
        if (report.pi->unidentifiable) md << "- Estimate unidentifiable for this table.\n";
        if (report.pi->clipped) md << "- Estimate was clipped to [0,1].\n";
        md << "\n";
    }
    md << "- Total tokens: " << report.total_tokens << "\n";
    return md.str();
}

namespace {

AuditOutcome outcome_from_json(const nlohmann::json& j) {
    AuditOutcome o;
    o.N = j.at("N").get<long long>();
    o.k = j.at("k").get<long long>();
    o.r_disc = j.at("r_disc").get<double>();
    o.p_value = j.at("p_value").get<double>();
    o.verdict = j.at("verdict").get<std::string>() == "SAME" ? Verdict::Same : Verdict::Different;
    for (const auto& bit : j.at("per_probe_mismatch")) {
        ProbeOutcome p;
        p.mismatch = bit.get<int>() != 0;
        o.per_probe.push_back(p);
    }
    return o;
}

}  // namespace

AuditReport report_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("report parse error: ") + e.what());
    }
    if (j.value("kind", std::string()) != "kbf-audit-report") {
        throw ConfigError("not an audit report document");
    }
    AuditReport report;
    report.fingerprint_identity = j.at("reference_identity").get<std::string>();
    report.fingerprint_digest = j.at("fingerprint_digest").get<std::string>();
    report.suspect_identity = j.at("suspect_identity").get<std::string>();
    report.p0 = j.value("p0", 0.0);
    report.calibration.gamma = j.at("gamma").get<double>();
    report.calibration.alpha = j.at("alpha").get<double>();
    if (j.contains("audit")) report.single = outcome_from_json(j["audit"]);
    if (j.contains("two_round")) {
        TwoRoundOutcome t;
        t.W1 = j["two_round"].at("W1").get<long long>();
        t.W2 = j["two_round"].at("W2").get<long long>();
        t.T = j["two_round"].at("T").get<long long>();
        t.p_value = j["two_round"].at("p_value").get<double>();
        t.verdict = j["two_round"].at("verdict").get<std::string>() == "SAME"
                        ? Verdict::Same
                        : Verdict::Different;
        t.round2_probe_ids = j["two_round"].at("round2_probe_ids").get<std::vector<std::string>>();
        t.round1 = outcome_from_json(j["two_round"].at("round1"));
        report.two_round = std::move(t);
    }
    if (j.contains("mcnemar")) {
        McNemarDiagnostic mc;
        mc.b = j["mcnemar"].at("b").get<long long>();
        mc.c = j["mcnemar"].at("c").get<long long>();
        mc.p_value = j["mcnemar"].at("p_value").get<double>();
        report.mcnemar = mc;
    }
    if (j.contains("pi_estimate")) {
        stats::PiEstimate pi;
        const auto& p = j["pi_estimate"];
        if (p.contains("point")) pi.point = p["point"].get<double>();
        if (p.contains("se")) pi.se = p["se"].get<double>();
        if (p.contains("interval")) {
            pi.interval_lo = p["interval"].at(0).get<double>();
            pi.interval_hi = p["interval"].at(1).get<double>();
        }
        pi.double_root = p.value("double_root", false);
        pi.clipped = p.value("clipped", false);
        pi.unidentifiable = p.value("unidentifiable", false);
        report.pi = pi;
    }
    report.total_tokens = j.value("total_tokens", 0LL);
    report.timestamp = j.value("timestamp", std::string());
    return report;
}

int report_exit_code(const AuditReport& report) {
    const Verdict v = report.two_round ? report.two_round->verdict
                                       : report.single->verdict;
    return v == Verdict::Same ? 0 : 2;
}

}  // namespace kbf
