#include "kbf/enroll.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "batch_runner.hpp"
#include "kbf/errors.hpp"
#include "kbf/prompts.hpp"
#include "kbf/text.hpp"

namespace kbf {

namespace {
constexpr const char* kEpochTimestamp = "1970-01-01T00:00:00Z";
}

std::string probe_id(const std::string& domain_id, const std::string& prompt) {
    return to_hex(fnv1a64(prompt, fnv1a64(domain_id)));
}

std::vector<CandidateRecord> propose_candidates(Endpoint& ref, const DomainSpec& spec,
                                                DiscoveryState& state,
                                                const EnrollOptions& opts) {
    const std::size_t tier_count = spec.difficulty_tiers.size();
    const std::size_t tier_idx =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(state.tier_index, 0)),
                              tier_count - 1);
    const std::string& tier = spec.difficulty_tiers[tier_idx];

    // only the most recent names go into the prompt; the state keeps all
    std::vector<std::string> recent;
    const std::size_t cap = static_cast<std::size_t>(opts.exclusion_cap);
    const std::size_t start = state.exclusions.size() > cap ? state.exclusions.size() - cap : 0;
    recent.assign(state.exclusions.begin() + static_cast<std::ptrdiff_t>(start),
                  state.exclusions.end());

    const std::string prompt =
        render_generation_prompt(spec, tier, recent, opts.candidates_per_round);
    const std::string text = ref.query(prompt, opts.audit_config);

    std::set<std::string> known(state.exclusions.begin(), state.exclusions.end());
    std::vector<CandidateRecord> fresh;
    for (auto& record : parse_candidate_records(text, spec)) {
        if (known.count(record.name)) continue;  // re-proposed duplicate: not re-verified
        known.insert(record.name);
        state.exclusions.push_back(record.name);
        fresh.push_back(std::move(record));
    }
    return fresh;
}

bool contrastive_screen_keep(Endpoint& contrast, const std::string& prompt, double consensus,
                             const DomainSpec& spec, const EndpointConfig& audit_config) {
    try {
        const std::string text = contrast.query(render_batch_prompt({prompt}), audit_config);
        const auto slots = parse_batch(text, 1, spec);
        if (slots[0].status == SlotStatus::Valid &&
            match_value(spec.match_rule, consensus, slots[0].value)) {
            return false;  // contrast reproduces the value: drop
        }
    } catch (const AmbiguousAlignment&) {
    } catch (const TransportFailure&) {
        // screening is an optimization, not a correctness gate
    } catch (const RefusedByPolicy&) {
    }
    return true;
}

std::vector<CheckOutcome> consistency_check(Endpoint& ref, Endpoint* contrast,
                                            ScreenState* screen,
                                            const std::vector<std::string>& prompts,
                                            const DomainSpec& spec, const EnrollOptions& opts) {
    std::vector<CheckOutcome> outcomes(prompts.size());
    if (prompts.empty()) return outcomes;

    std::vector<const DomainSpec*> specs(prompts.size(), &spec);

    // First check: the audit configuration itself (temperature 0).
    const auto t0 = internal::run_batches(ref, specs, prompts, opts.audit_config,
                                          opts.batch_size, opts.max_in_flight);

    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (t0[i].status == SlotStatus::Valid) {
            outcomes[i].consensus = t0[i].value;
            alive.push_back(i);
        }
    }

    // Contrastive screen between the first check and the temperature-0.7
    // runs; it saves the expensive reference calls for separating probes.
    const bool screen_active =
        contrast != nullptr && opts.screen_enabled && (screen == nullptr || !screen->disabled);
    if (screen_active && !alive.empty()) {
        std::vector<const DomainSpec*> cspecs(alive.size(), &spec);
        std::vector<std::string> cprompts;
        cprompts.reserve(alive.size());
        for (std::size_t i : alive) cprompts.push_back(prompts[i]);
        const auto cres = internal::run_batches(*contrast, cspecs, cprompts, opts.audit_config,
                                                opts.batch_size, opts.max_in_flight);
        std::vector<std::size_t> kept;
        for (std::size_t a = 0; a < alive.size(); ++a) {
            const std::size_t i = alive[a];
            outcomes[i].contrast_value =
                cres[a].status == SlotStatus::Valid ? std::optional<double>(cres[a].value)
                                                    : std::nullopt;
            const bool drop = cres[a].status == SlotStatus::Valid &&
                              match_value(spec.match_rule, outcomes[i].consensus, cres[a].value);
            if (drop) {
                outcomes[i].screened_out = true;
            } else {
                kept.push_back(i);
            }
        }
        if (screen) {
            screen->screened += static_cast<long long>(alive.size());
            screen->dropped += static_cast<long long>(alive.size() - kept.size());
            if (screen->screened >= opts.screen_min_sample &&
                static_cast<double>(screen->dropped) >
                    opts.screen_auto_disable_threshold * static_cast<double>(screen->screened)) {
                screen->disabled = true;
            }
        }
        alive = std::move(kept);
    }
    if (alive.empty()) return outcomes;

    // Two independent temperature-0.7 stability runs on the survivors.
    std::vector<const DomainSpec*> sspecs(alive.size(), &spec);
    std::vector<std::string> sprompts;
    sprompts.reserve(alive.size());
    for (std::size_t i : alive) sprompts.push_back(prompts[i]);

    EndpointConfig cfg_a = opts.audit_config;
    cfg_a.temperature = opts.check_temperature_a;
    EndpointConfig cfg_b = opts.audit_config;
    cfg_b.temperature = opts.check_temperature_b;
    const auto ra = internal::run_batches(ref, sspecs, sprompts, cfg_a, opts.batch_size,
                                          opts.max_in_flight);
    const auto rb = internal::run_batches(ref, sspecs, sprompts, cfg_b, opts.batch_size,
                                          opts.max_in_flight);

    for (std::size_t a = 0; a < alive.size(); ++a) {
        const std::size_t i = alive[a];
        if (ra[a].status != SlotStatus::Valid || rb[a].status != SlotStatus::Valid) continue;
        const double v0 = outcomes[i].consensus;
        const double va = ra[a].value;
        const double vb = rb[a].value;
        const auto& rule = spec.match_rule;
        if (match_value(rule, v0, va) && match_value(rule, v0, vb) && match_value(rule, va, vb)) {
            outcomes[i].survived = true;
            outcomes[i].check_values = {v0, va, vb};
        }
    }
    return outcomes;
}

bool stop_domain(const std::vector<int>& history, int min_probes) {
    if (history.empty()) throw std::invalid_argument("stop_domain: history must be nonempty");
    if (history.size() < 2) return false;
    long long total = 0;
    for (int h : history) total += h;
    return total >= min_probes && history[history.size() - 1] == 0 &&
           history[history.size() - 2] == 0;
}

SelfCalibration self_calibrate(Endpoint& ref, const std::vector<Probe>& probes,
                               const DomainRegistry& registry, const EnrollOptions& opts) {
    if (probes.empty()) throw std::invalid_argument("self_calibrate: probes must be nonempty");

    std::vector<const DomainSpec*> specs;
    std::vector<std::string> prompts;
    specs.reserve(probes.size());
    prompts.reserve(probes.size());
    for (const auto& p : probes) {
        specs.push_back(&registry.at(p.domain_id));
        prompts.push_back(p.prompt);
    }
    const auto answers = internal::run_batches(ref, specs, prompts, opts.audit_config,
                                               opts.batch_size, opts.max_in_flight);

    SelfCalibration cal;
    cal.match_vector.resize(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const bool ok = answers[i].status == SlotStatus::Valid &&
                        match_value(specs[i]->match_rule, probes[i].consensus_value,
                                    answers[i].value);
        cal.match_vector[i] = ok ? 1 : 0;
        if (!ok) ++cal.k_self;
    }
    cal.p0 = stats::cp_upper(cal.k_self, static_cast<long long>(probes.size()),
                             opts.calibration.gamma);
    return cal;
}

Fingerprint enroll(Endpoint& ref, Endpoint* contrast, const DomainRegistry& registry,
                   const EnrollOptions& opts, std::vector<DiscoveryState>* trace) {
    std::vector<Probe> probes;
    ScreenState screen;

    for (const auto& spec : registry.domains()) {
        DiscoveryState state;
        state.domain_id = spec.id;
        for (int round = 0; round < opts.max_rounds_per_domain; ++round) {
            state.tier_index = round;
            const auto candidates = propose_candidates(ref, spec, state, opts);

            std::vector<std::string> prompts;
            prompts.reserve(candidates.size());
            for (const auto& c : candidates) prompts.push_back(render_audit_prompt(spec, c.name));

            const auto outcomes =
                consistency_check(ref, contrast, &screen, prompts, spec, opts);

            int yield = 0;
            for (std::size_t i = 0; i < outcomes.size(); ++i) {
                if (!outcomes[i].survived) continue;
                Probe p;
                p.id = probe_id(spec.id, prompts[i]);
                p.prompt = prompts[i];
                p.domain_id = spec.id;
                p.subject = candidates[i].name;
                p.consensus_value = outcomes[i].consensus;
                p.tier = round;
                p.check_values = outcomes[i].check_values;
                p.contrast_value = outcomes[i].contrast_value;
                probes.push_back(std::move(p));
                ++yield;
            }
            state.stable_count_history.push_back(yield);
            if (stop_domain(state.stable_count_history, spec.min_probes_for_stop)) break;
        }
        if (trace) trace->push_back(std::move(state));
    }

    if (probes.empty()) {
        throw EnrollmentFailed("no stable boundary probes found for reference '" +
                               ref.identity() + "'");
    }

    const auto cal = self_calibrate(ref, probes, registry, opts);

    Fingerprint fp;
    fp.reference_identity = ref.identity();
    fp.probes = std::move(probes);
    fp.k_self = cal.k_self;
    fp.p0 = cal.p0;
    fp.gamma = opts.calibration.gamma;
    fp.audit_config = opts.audit_config;
    fp.created_at = opts.created_at.empty() ? kEpochTimestamp : opts.created_at;
    fp.self_test_vector = cal.match_vector;
    return fp;
}

namespace {

nlohmann::ordered_json fingerprint_body(const Fingerprint& fp) {
    nlohmann::ordered_json j;
    j["schema_version"] = kFingerprintSchemaVersion;
    j["kind"] = "kbf-fingerprint";
    j["reference_identity"] = fp.reference_identity;
    j["gamma"] = fp.gamma;
    j["k_self"] = fp.k_self;
    j["p0"] = fp.p0;
    nlohmann::ordered_json cfg;
    cfg["system_prompt"] = fp.audit_config.system_prompt;
    cfg["temperature"] = fp.audit_config.temperature;
    cfg["max_output_tokens"] = fp.audit_config.max_output_tokens;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
    for (const auto& [k, v] : fp.audit_config.extra) extra[k] = v;
    cfg["extra"] = extra;
    j["audit_config"] = cfg;
    j["self_test_vector"] = fp.self_test_vector;
    nlohmann::ordered_json probes = nlohmann::ordered_json::array();
    for (const auto& p : fp.probes) {
        nlohmann::ordered_json pj;
        pj["id"] = p.id;
        pj["domain"] = p.domain_id;
        pj["subject"] = p.subject;
        pj["prompt"] = p.prompt;
        pj["consensus"] = p.consensus_value;
        pj["tier"] = p.tier;
        pj["checks"] = p.check_values;
        if (p.contrast_value) {
            pj["contrast"] = *p.contrast_value;
        } else {
            pj["contrast"] = nullptr;
        }
        probes.push_back(std::move(pj));
    }
    j["probes"] = probes;
    return j;
}

}  // namespace

std::string fingerprint_digest(const Fingerprint& fp) {
    return to_hex(fnv1a64(fingerprint_body(fp).dump()));
}

void save_fingerprint(const Fingerprint& fp, const std::string& path) {
    nlohmann::ordered_json j = fingerprint_body(fp);
    j["created_at"] = fp.created_at;  // volatile field outside the digest
    j["digest"] = fingerprint_digest(fp);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write fingerprint: " + path);
    out << j.dump(2) << '\n';
}

Fingerprint load_fingerprint(const std::string& path, const DomainRegistry& registry) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open fingerprint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("fingerprint '" + path + "': " + e.what());
    }
    if (j.value("kind", std::string()) != "kbf-fingerprint" ||
        j.value("schema_version", 0) != kFingerprintSchemaVersion) {
        throw ConfigError("fingerprint '" + path + "': bad header");
    }

    Fingerprint fp;
    try {
        fp.reference_identity = j.at("reference_identity").get<std::string>();
        fp.gamma = j.at("gamma").get<double>();
        fp.k_self = j.at("k_self").get<long long>();
        fp.p0 = j.at("p0").get<double>();
        const auto& cfg = j.at("audit_config");
        fp.audit_config.system_prompt = cfg.at("system_prompt").get<std::string>();
        fp.audit_config.temperature = cfg.at("temperature").get<double>();
        fp.audit_config.max_output_tokens = cfg.at("max_output_tokens").get<int>();
        for (const auto& [k, v] : cfg.at("extra").items()) fp.audit_config.extra[k] = v;
        fp.self_test_vector = j.at("self_test_vector").get<std::vector<uint8_t>>();
        fp.created_at = j.value("created_at", std::string(kEpochTimestamp));
        for (const auto& pj : j.at("probes")) {
            Probe p;
            p.id = pj.at("id").get<std::string>();
            p.domain_id = pj.at("domain").get<std::string>();
            p.subject = pj.at("subject").get<std::string>();
            p.prompt = pj.at("prompt").get<std::string>();
            p.consensus_value = pj.at("consensus").get<double>();
            p.tier = pj.at("tier").get<int>();
            p.check_values = pj.at("checks").get<std::vector<double>>();
            if (!pj.at("contrast").is_null()) p.contrast_value = pj.at("contrast").get<double>();
            fp.probes.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("fingerprint '" + path + "': " + e.what());
    }

    // Invariants before anything downstream trusts the file.
    if (fp.probes.empty()) throw ConfigError("fingerprint '" + path + "': no probes");
    if (fp.self_test_vector.size() != fp.probes.size()) {
        throw ConfigError("fingerprint '" + path + "': self-test vector length mismatch");
    }
    long long zeros = 0;
    for (uint8_t bit : fp.self_test_vector) zeros += bit == 0 ? 1 : 0;
    if (zeros != fp.k_self) {
        throw ConfigError("fingerprint '" + path + "': k_self does not match self-test vector");
    }
    const double expect_p0 = stats::cp_upper(fp.k_self, fp.size(), fp.gamma);
    if (std::fabs(expect_p0 - fp.p0) > 1e-9) {
        throw ConfigError("fingerprint '" + path + "': p0 inconsistent with (k_self, N, gamma)");
    }
    for (const auto& p : fp.probes) {
        const DomainSpec& spec = registry.at(p.domain_id);
        if (!validate_range(spec, p.consensus_value)) {
            throw ConfigError("fingerprint '" + path + "': probe " + p.id +
                              " consensus outside domain range");
        }
    }
    return fp;
}

}  // namespace kbf
