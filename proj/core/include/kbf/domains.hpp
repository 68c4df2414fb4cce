#pragma once

#include <string>
#include <vector>

namespace kbf {

inline constexpr int kRegistrySchemaVersion = 1;

// Slot markers inside a domain template.
inline constexpr const char* kValueSlot = "__";
inline constexpr const char* kSubjectSlot = "{subject}";

enum class MatchKind { ExactInteger, AbsoluteTolerance, RelativeTolerance };

std::string to_string(MatchKind kind);
MatchKind match_kind_from_string(const std::string& s);

// Comparison rule between a stored consensus value and a fresh answer.
// Exact-integer compares after rounding; absolute compares |a-b| against the
// tolerance in domain units; relative compares against tolerance *
// max(|a|,|b|,eps) so the rule stays symmetric near zero.
struct MatchRule {
    MatchKind kind = MatchKind::ExactInteger;
    double tolerance = 0.0;  // absent (0) for exact-integer

    static MatchRule exact_integer() { return {MatchKind::ExactInteger, 0.0}; }
    static MatchRule absolute(double tol) { return {MatchKind::AbsoluteTolerance, tol}; }
    static MatchRule relative(double tol) { return {MatchKind::RelativeTolerance, tol}; }
};

// Denominator guard for relative rules; keeps a ~ 0 from blowing up the
// ratio. Domain values at paper scale are far above this.
inline constexpr double kRelativeEpsilon = 1e-9;

bool match_value(const MatchRule& rule, double a, double b);

// One numerical recall domain: prompt template, valid range, match rule,
// difficulty schedule.
struct DomainSpec {
    std::string id;
    std::string display_name;
    std::string template_text;  // contains {subject} and the __ value slot
    double range_lo = 0.0;
    double range_hi = 0.0;
    MatchRule match_rule;
    std::vector<std::string> difficulty_tiers;
    int min_probes_for_stop = 5;
};

bool validate_range(const DomainSpec& spec, double v);

// Substitute the subject, leave the value slot blank. Deterministic.
// Throws ConfigError when the template has no value slot.
std::string render_audit_prompt(const DomainSpec& spec, const std::string& subject);

class DomainRegistry {
  public:
    DomainRegistry() = default;
    explicit DomainRegistry(std::vector<DomainSpec> domains);

    static DomainRegistry load_file(const std::string& path);
    static DomainRegistry load_json_text(const std::string& text);

    // The registry shipped under data/registry.json, compiled in so scripted
    // tests do not depend on an install path.
    static DomainRegistry builtin();

    const std::vector<DomainSpec>& domains() const { return domains_; }
    const DomainSpec& at(const std::string& id) const;
    const DomainSpec* find(const std::string& id) const;
    std::size_t size() const { return domains_.size(); }

  private:
    std::vector<DomainSpec> domains_;
};

// Invariant checks for a registry (unique ids, lo < hi, slot counts,
// tolerance signs). Returns human-readable findings; empty means clean.
std::vector<std::string> lint_registry(const std::vector<DomainSpec>& domains);

}  // namespace kbf
