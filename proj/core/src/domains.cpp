#include "kbf/domains.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kbf/errors.hpp"

namespace kbf {

std::string to_string(MatchKind kind) {
    switch (kind) {
        case MatchKind::ExactInteger: return "exact-integer";
        case MatchKind::AbsoluteTolerance: return "absolute-tolerance";
        case MatchKind::RelativeTolerance: return "relative-tolerance";
    }
    return "exact-integer";
}

MatchKind match_kind_from_string(const std::string& s) {
    if (s == "exact-integer") return MatchKind::ExactInteger;
    if (s == "absolute-tolerance") return MatchKind::AbsoluteTolerance;
    if (s == "relative-tolerance") return MatchKind::RelativeTolerance;
    throw ConfigError("unknown match rule kind: " + s);
}

bool match_value(const MatchRule& rule, double a, double b) {
    switch (rule.kind) {
        case MatchKind::ExactInteger:
            return std::llround(a) == std::llround(b);
        case MatchKind::AbsoluteTolerance:
            return std::fabs(a - b) <= rule.tolerance;
        case MatchKind::RelativeTolerance: {
            const double scale = std::max({std::fabs(a), std::fabs(b), kRelativeEpsilon});
            return std::fabs(a - b) <= rule.tolerance * scale;
        }
    }
    return false;
}

bool validate_range(const DomainSpec& spec, double v) {
    return std::isfinite(v) && v >= spec.range_lo && v <= spec.range_hi;
}

std::string render_audit_prompt(const DomainSpec& spec, const std::string& subject) {
    const auto slot = spec.template_text.find(kValueSlot);
    if (slot == std::string::npos) {
        throw ConfigError("domain '" + spec.id + "' template has no value slot");
    }
    std::string out = spec.template_text;
    const auto pos = out.find(kSubjectSlot);
    if (pos != std::string::npos) {
        out.replace(pos, std::string(kSubjectSlot).size(), subject);
    }
    return out;
}

DomainRegistry::DomainRegistry(std::vector<DomainSpec> domains) : domains_(std::move(domains)) {
    auto findings = lint_registry(domains_);
    if (!findings.empty()) {
        throw ConfigError("invalid registry: " + findings.front());
    }
}

const DomainSpec& DomainRegistry::at(const std::string& id) const {
    if (const DomainSpec* d = find(id)) return *d;
    throw ConfigError("unknown domain id: " + id);
}

const DomainSpec* DomainRegistry::find(const std::string& id) const {
    for (const auto& d : domains_) {
        if (d.id == id) return &d;
    }
    return nullptr;
}

namespace {

DomainSpec parse_domain(const nlohmann::json& j) {
    DomainSpec d;
    d.id = j.at("id").get<std::string>();
    d.display_name = j.at("name").get<std::string>();
    d.template_text = j.at("template").get<std::string>();
    d.range_lo = j.at("range").at(0).get<double>();
    d.range_hi = j.at("range").at(1).get<double>();
    d.match_rule.kind = match_kind_from_string(j.at("rule").get<std::string>());
    if (d.match_rule.kind != MatchKind::ExactInteger) {
        d.match_rule.tolerance = j.at("tolerance").get<double>();
    } else if (j.contains("tolerance")) {
        throw ConfigError("domain '" + d.id + "': exact-integer carries no tolerance");
    }
    d.difficulty_tiers = j.at("tiers").get<std::vector<std::string>>();
    d.min_probes_for_stop = j.value("min_probes_for_stop", 5);
    return d;
}

}  // namespace

DomainRegistry DomainRegistry::load_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("registry parse error: ") + e.what());
    }
    if (j.value("schema_version", 0) != kRegistrySchemaVersion) {
        throw ConfigError("registry schema_version mismatch");
    }
    std::vector<DomainSpec> domains;
    for (const auto& dj : j.at("domains")) {
        try {
            domains.push_back(parse_domain(dj));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("registry domain record error: ") + e.what());
        }
    }
    return DomainRegistry(std::move(domains));
}

DomainRegistry DomainRegistry::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open registry file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_json_text(ss.str());
}

std::vector<std::string> lint_registry(const std::vector<DomainSpec>& domains) {
    std::vector<std::string> findings;
    std::set<std::string> ids;
    if (domains.empty()) findings.push_back("registry has no domains");
    for (const auto& d : domains) {
        const std::string where = "domain '" + d.id + "': ";
        if (!ids.insert(d.id).second) findings.push_back(where + "duplicate id");
        if (!(d.range_lo < d.range_hi)) findings.push_back(where + "range lo must be < hi");
        std::size_t slots = 0;
        for (std::size_t p = d.template_text.find(kValueSlot); p != std::string::npos;
             p = d.template_text.find(kValueSlot, p + 2)) {
            ++slots;
        }
        if (slots != 1) findings.push_back(where + "template must contain exactly one value slot");
        if (d.template_text.find(kSubjectSlot) == std::string::npos) {
            findings.push_back(where + "template must contain a {subject} slot");
        }
        if (d.match_rule.kind != MatchKind::ExactInteger && !(d.match_rule.tolerance > 0)) {
            findings.push_back(where + "tolerance must be > 0 for absolute/relative rules");
        }
        if (d.match_rule.kind == MatchKind::ExactInteger && d.match_rule.tolerance != 0) {
            findings.push_back(where + "exact-integer carries no tolerance");
        }
        if (d.difficulty_tiers.empty()) findings.push_back(where + "needs at least one tier");
        if (d.min_probes_for_stop < 1) findings.push_back(where + "min_probes_for_stop must be >= 1");
    }
    return findings;
}

namespace {

// Mirrors data/registry.json. Five tier descriptors move from well-known
// facts toward specialist-only material.
const char* kBuiltinRegistryJson = R"JSON({
  "schema_version": 1,
  "domains": [
    {
      "id": "boiling_point",
      "name": "Material boiling points",
      "template": "The boiling point of {subject} at 1 atm is __ °C.",
      "range": [-300, 600],
      "rule": "absolute-tolerance",
      "tolerance": 3,
      "tiers": [
        "well-known compounds covered in introductory chemistry",
        "compounds from undergraduate laboratory coursework",
        "industrial reagents and less common solvents",
        "rarely tabulated organometallic and specialty compounds",
        "specialist-only obscure compounds from primary literature"
      ]
    },
    {
      "id": "melting_point",
      "name": "Material melting points",
      "template": "The melting point of {subject} at 1 atm is __ °C.",
      "range": [-300, 4000],
      "rule": "absolute-tolerance",
      "tolerance": 3,
      "tiers": [
        "well-known elements and everyday materials",
        "standard laboratory compounds",
        "refractory ceramics and alloys",
        "rarely tabulated intermetallics",
        "specialist-only obscure phases from primary literature"
      ]
    },
    {
      "id": "physical_constants",
      "name": "Physical constants and properties",
      "template": "The value of {subject} is __ in SI units.",
      "range": [0, 1e30],
      "rule": "relative-tolerance",
      "tolerance": 0.05,
      "tiers": [
        "constants every physics student knows",
        "material properties from standard handbooks",
        "less common material coefficients",
        "narrow-field measured quantities",
        "specialist-only obscure measured constants"
      ]
    },
    {
      "id": "astronomy",
      "name": "Astronomy facts",
      "template": "In astronomy, the value of {subject} is __.",
      "range": [0, 1e15],
      "rule": "relative-tolerance",
      "tolerance": 0.05,
      "tiers": [
        "facts about the solar system taught in school",
        "bright-star and famous-object parameters",
        "minor planet and exoplanet parameters",
        "faint-object survey measurements",
        "specialist-only obscure catalog entries"
      ]
    },
    {
      "id": "biology",
      "name": "Chromosome counts",
      "template": "The diploid chromosome number of {subject} can be __.",
      "range": [1, 2000],
      "rule": "exact-integer",
      "tiers": [
        "model organisms and familiar animals",
        "common plants and livestock",
        "less familiar wild species",
        "rarely cited taxa from cytogenetics surveys",
        "specialist-only obscure species records"
      ]
    },
    {
      "id": "mathematics",
      "name": "Mathematical sequence values",
      "template": "The value of {subject} is __.",
      "range": [-1e15, 1e15],
      "rule": "exact-integer",
      "tiers": [
        "small values of famous sequences",
        "mid-range values of well-studied sequences",
        "larger terms of named combinatorial quantities",
        "rarely quoted terms of catalogued sequences",
        "specialist-only obscure sequence entries"
      ]
    },
    {
      "id": "programming_history",
      "name": "Programming release years",
      "template": "The initial release year of {subject} was __.",
      "range": [1950, 2030],
      "rule": "exact-integer",
      "tiers": [
        "major languages and operating systems",
        "widely used libraries and tools",
        "niche languages and historical systems",
        "minor releases of historical software",
        "specialist-only obscure software milestones"
      ]
    },
    {
      "id": "crypto_parameters",
      "name": "Cryptographic algorithm parameters",
      "template": "The number of {subject} is __.",
      "range": [1, 1000000],
      "rule": "exact-integer",
      "tiers": [
        "parameters of famous ciphers and hashes",
        "parameters of standardized algorithms",
        "parameters of less common primitives",
        "competition candidates and legacy ciphers",
        "specialist-only obscure primitive parameters"
      ]
    },
    {
      "id": "drug_half_life",
      "name": "Drug elimination half-lives",
      "template": "The elimination half-life of {subject} is __ hours.",
      "range": [0.01, 5000],
      "rule": "relative-tolerance",
      "tolerance": 0.10,
      "tiers": [
        "very common prescription drugs",
        "standard hospital formulary drugs",
        "less commonly prescribed agents",
        "rarely used or regional medications",
        "specialist-only obscure compounds"
      ]
    },
    {
      "id": "pop_culture",
      "name": "Pop culture counts and years",
      "template": "For {subject}, the number is __.",
      "range": [0, 100000],
      "rule": "exact-integer",
      "tiers": [
        "blockbuster films and hit series",
        "popular franchises and albums",
        "cult classics and niche franchises",
        "regional or short-lived productions",
        "specialist-only obscure trivia"
      ]
    },
    {
      "id": "internet_culture",
      "name": "Internet culture years and counts",
      "template": "For {subject}, the value is __.",
      "range": [0, 10000000000],
      "rule": "exact-integer",
      "tiers": [
        "landmark websites and viral events",
        "well-known platforms and memes",
        "niche communities and events",
        "short-lived services and minor milestones",
        "specialist-only obscure internet history"
      ]
    },
    {
      "id": "chinese_history",
      "name": "Chinese history years",
      "template": "In Chinese history, the year of {subject} was __ (CE; negative for BCE).",
      "range": [-3000, 2030],
      "rule": "exact-integer",
      "tiers": [
        "dynasty founding dates and famous events",
        "major battles and reform years",
        "lesser-known reign and era changes",
        "minor recorded local events",
        "specialist-only obscure chronicle entries"
      ]
    },
    {
      "id": "chinese_geography",
      "name": "Chinese geography measurements",
      "template": "In Chinese geography, the value of {subject} is __.",
      "range": [0, 1000000000],
      "rule": "relative-tolerance",
      "tolerance": 0.05,
      "tiers": [
        "major rivers, mountains and provinces",
        "well-known cities and landmarks",
        "smaller administrative regions",
        "minor geographic features",
        "specialist-only obscure survey figures"
      ]
    },
    {
      "id": "chinese_internet",
      "name": "Chinese internet event years",
      "template": "The year of {subject} on the Chinese internet was __.",
      "range": [1990, 2030],
      "rule": "exact-integer",
      "tiers": [
        "landmark platform launches",
        "well-known viral events",
        "niche community milestones",
        "short-lived services and minor events",
        "specialist-only obscure events"
      ]
    },
    {
      "id": "chinese_literature",
      "name": "Chinese literature counts and years",
      "template": "For the work {subject}, the number is __.",
      "range": [0, 2030],
      "rule": "exact-integer",
      "tiers": [
        "the four great classical novels",
        "famous anthologies and poets",
        "less famous classical works",
        "minor catalogued works",
        "specialist-only obscure editions"
      ]
    }
  ]
})JSON";

}  // namespace

DomainRegistry DomainRegistry::builtin() {
    return load_json_text(kBuiltinRegistryJson);
}

}  // namespace kbf
