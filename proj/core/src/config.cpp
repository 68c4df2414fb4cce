#include "kbf/config.hpp"

#include <fstream>

#include <json.hpp>

#include "kbf/errors.hpp"
#include "kbf/http_client.hpp"
#include "kbf/prompts.hpp"
#include "kbf/scripted.hpp"

namespace kbf {

const EndpointDecl& AuditConfig::endpoint(const std::string& name) const {
    for (const auto& e : endpoints) {
        if (e.name == name) return e;
    }
    throw ConfigError("no endpoint named '" + name + "' in config");
}

AuditConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    if (j.value("schema_version", 0) != kConfigSchemaVersion) {
        throw ConfigError("config '" + path + "': schema_version mismatch");
    }

    AuditConfig cfg;
    try {
        cfg.registry_path = j.value("registry", std::string());
        if (j.contains("calibration")) {
            cfg.calibration.gamma = j["calibration"].value("gamma", 0.99);
            cfg.calibration.alpha = j["calibration"].value("alpha", 0.05);
        }
        cfg.batch_size = j.value("batch_size", 10);
        if (j.contains("retry")) {
            cfg.retry.max_attempts = j["retry"].value("max_attempts", 3);
            cfg.retry.initial_backoff_seconds = j["retry"].value("initial_backoff_seconds", 1.0);
        }
        cfg.max_in_flight = j.value("max_in_flight", 4);
        if (j.contains("cassette")) {
            const std::string mode = j["cassette"].value("mode", "off");
            if (mode == "off") {
                cfg.cassette_mode = CassetteMode::Off;
            } else if (mode == "record") {
                cfg.cassette_mode = CassetteMode::Record;
            } else if (mode == "replay") {
                cfg.cassette_mode = CassetteMode::Replay;
            } else {
                throw ConfigError("config: cassette mode must be off|record|replay");
            }
            cfg.cassette_path = j["cassette"].value("path", std::string());
            if (cfg.cassette_mode != CassetteMode::Off && cfg.cassette_path.empty()) {
                throw ConfigError("config: cassette mode requires a path");
            }
        }
        cfg.seed = j.value("seed", 0ULL);
        cfg.deterministic_time = j.value("deterministic_time", false);

        cfg.audit_request.system_prompt = kRecallSystemPrompt;
        cfg.audit_request.temperature = 0.0;
        if (j.contains("audit_request")) {
            const auto& a = j["audit_request"];
            cfg.audit_request.system_prompt = a.value("system_prompt", cfg.audit_request.system_prompt);
            cfg.audit_request.temperature = a.value("temperature", 0.0);
            cfg.audit_request.max_output_tokens = a.value("max_output_tokens", 1024);
            if (a.contains("extra")) {
                for (const auto& [k, v] : a["extra"].items()) {
                    cfg.audit_request.extra[k] = v.get<std::string>();
                }
            }
        }

        cfg.enroll.audit_config = cfg.audit_request;
        cfg.enroll.calibration = cfg.calibration;
        cfg.enroll.batch_size = cfg.batch_size;
        cfg.enroll.max_in_flight = cfg.max_in_flight;
        if (j.contains("enroll")) {
            const auto& e = j["enroll"];
            cfg.enroll.candidates_per_round = e.value("candidates_per_round", 20);
            cfg.enroll.exclusion_cap = e.value("exclusion_cap", 60);
            cfg.enroll.max_rounds_per_domain = e.value("max_rounds_per_domain", 8);
            cfg.enroll.screen_enabled = e.value("screen_enabled", true);
            cfg.enroll.screen_auto_disable_threshold = e.value("screen_auto_disable_threshold", 0.90);
            cfg.enroll.screen_min_sample = e.value("screen_min_sample", 25);
            cfg.enroll.check_temperature_a = e.value("check_temperature_a", 0.7);
            cfg.enroll.check_temperature_b = e.value("check_temperature_b", 0.7);
        }

        for (const auto& ej : j.value("endpoints", nlohmann::json::array())) {
            EndpointDecl d;
            d.name = ej.at("name").get<std::string>();
            d.kind = ej.at("kind").get<std::string>();
            if (d.kind == "http") {
                d.base_url = ej.at("base_url").get<std::string>();
                d.model = ej.at("model").get<std::string>();
                d.api_key_env = ej.value("api_key_env", std::string());
                if (ej.contains("extra")) {
                    for (const auto& [k, v] : ej["extra"].items()) {
                        d.extra[k] = v.get<std::string>();
                    }
                }
            } else if (d.kind == "scripted") {
                d.script_path = ej.at("script").get<std::string>();
                d.noise_rate = ej.value("noise_rate", 0.0);
                d.seed = ej.value("seed", cfg.seed);
            } else if (d.kind == "mixed") {
                d.pi = ej.at("pi").get<double>();
                d.reference = ej.at("reference").get<std::string>();
                d.substitute = ej.at("substitute").get<std::string>();
                d.seed = ej.value("seed", cfg.seed);
            } else {
                throw ConfigError("config: endpoint kind must be http|scripted|mixed");
            }
            cfg.endpoints.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return cfg;
}

DomainRegistry load_registry_for(const AuditConfig& config) {
    if (config.registry_path.empty()) return DomainRegistry::builtin();
    return DomainRegistry::load_file(config.registry_path);
}

namespace {

// The identity an endpoint would report live; replay keys must match it.
std::string resolve_identity(const AuditConfig& config, const EndpointDecl& decl,
                             const DomainRegistry& registry) {
    if (decl.kind == "http") return decl.name + ":" + decl.model;
    if (decl.kind == "scripted") {
        return ScriptedOracle::load_file(decl.script_path, registry)->identity();
    }
    if (decl.kind == "mixed") {
        return "mixed(" + resolve_identity(config, config.endpoint(decl.reference), registry) +
               "," + resolve_identity(config, config.endpoint(decl.substitute), registry) + ")";
    }
    throw ConfigError("unsupported endpoint kind: " + decl.kind);
}

}  // namespace

EndpointSet::EndpointSet(const AuditConfig& config, const DomainRegistry& registry) {
    if (config.cassette_mode == CassetteMode::Record) {
        cassette_ = Cassette::open_for_record(config.cassette_path);
    } else if (config.cassette_mode == CassetteMode::Replay) {
        cassette_ = Cassette::open_for_replay(config.cassette_path);
    }

    if (config.cassette_mode == CassetteMode::Replay) {
        // every endpoint replays at the top level; no live backend exists
        for (const auto& decl : config.endpoints) {
            backends_[decl.name] = std::make_shared<ReplayOracle>(
                resolve_identity(config, decl, registry), cassette_);
        }
    } else {
        // two passes: plain backends first, mixed routers over them
        for (const auto& decl : config.endpoints) {
            if (decl.kind != "mixed") backends_[decl.name] = build_backend(decl, registry);
        }
        for (const auto& decl : config.endpoints) {
            if (decl.kind != "mixed") continue;
            const auto ref = backends_.find(decl.reference);
            const auto sub = backends_.find(decl.substitute);
            if (ref == backends_.end() || sub == backends_.end()) {
                throw ConfigError("mixed endpoint '" + decl.name +
                                  "' references undeclared backends");
            }
            MixedRoutingPolicy policy;
            policy.pi = decl.pi;
            policy.reference = ref->second;
            policy.substitute = sub->second;
            policy.seed = decl.seed;
            backends_[decl.name] = std::make_shared<MixedOracle>(policy);
        }
    }

    for (const auto& decl : config.endpoints) {
        std::shared_ptr<Oracle> backend = backends_.at(decl.name);
        if (config.cassette_mode == CassetteMode::Record) {
            backend = std::make_shared<RecordingOracle>(backend, cassette_);
        }
        auto ep = std::make_unique<Endpoint>(decl.name, backend, config.retry);
        ep->set_deterministic_time(config.deterministic_time);
        endpoints_[decl.name] = std::move(ep);
    }
}

std::shared_ptr<Oracle> EndpointSet::build_backend(const EndpointDecl& decl,
                                                   const DomainRegistry& registry) {
    if (decl.kind == "http") {
        return std::make_shared<HttpOracle>(decl.name, decl.base_url, decl.model,
                                            decl.api_key_env);
    }
    if (decl.kind == "scripted") {
        return ScriptedOracle::load_file(decl.script_path, registry, decl.noise_rate, decl.seed);
    }
    throw ConfigError("unsupported endpoint kind: " + decl.kind);
}

Endpoint& EndpointSet::get(const std::string& name) {
    const auto it = endpoints_.find(name);
    if (it == endpoints_.end()) throw ConfigError("no endpoint named '" + name + "'");
    return *it->second;
}

}  // namespace kbf
