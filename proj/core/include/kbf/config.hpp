#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kbf/cassette.hpp"
#include "kbf/domains.hpp"
#include "kbf/enroll.hpp"
#include "kbf/oracle.hpp"
#include "kbf/stats.hpp"

namespace kbf {

inline constexpr int kConfigSchemaVersion = 1;

enum class CassetteMode { Off, Record, Replay };

// One endpoint declaration from the audit config file.
struct EndpointDecl {
    std::string name;
    std::string kind;  // "http" | "scripted" | "mixed"
    // http
    std::string base_url;
    std::string model;
    std::string api_key_env;
    std::map<std::string, std::string> extra;
    // scripted
    std::string script_path;
    double noise_rate = 0.0;
    // mixed
    double pi = 0.0;
    std::string reference;   // names of other declared endpoints
    std::string substitute;
    uint64_t seed = 0;
};

// The single operator-facing configuration document. Flags override file
// values at the CLI layer.
struct AuditConfig {
    std::string registry_path;  // empty -> builtin registry
    stats::CalibrationConfig calibration;
    int batch_size = 10;
    RetryPolicy retry;
    int max_in_flight = 4;
    CassetteMode cassette_mode = CassetteMode::Off;
    std::string cassette_path;
    uint64_t seed = 0;
    bool deterministic_time = false;
    EndpointConfig audit_request;  // system prompt, temperature, max tokens
    EnrollOptions enroll;
    std::vector<EndpointDecl> endpoints;

    const EndpointDecl& endpoint(const std::string& name) const;
};

AuditConfig load_config(const std::string& path);

// Builds the endpoint graph declared in the config: scripted and http
// backends first, then mixed routers over them, each wrapped per the
// cassette mode. Replay mode never constructs an http backend.
class EndpointSet {
  public:
    EndpointSet(const AuditConfig& config, const DomainRegistry& registry);

    Endpoint& get(const std::string& name);
    std::shared_ptr<Cassette> cassette() const { return cassette_; }

  private:
    std::shared_ptr<Oracle> build_backend(const EndpointDecl& decl,
                                          const DomainRegistry& registry);

    std::map<std::string, std::shared_ptr<Oracle>> backends_;
    std::map<std::string, std::unique_ptr<Endpoint>> endpoints_;
    std::shared_ptr<Cassette> cassette_;
};

DomainRegistry load_registry_for(const AuditConfig& config);

}  // namespace kbf
