#include "kbf/scripted.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kbf/errors.hpp"
#include "kbf/prompts.hpp"
#include "kbf/rng.hpp"
#include "kbf/text.hpp"

namespace kbf {

namespace {

TokenUsage synthetic_usage(const std::string& prompt, const std::string& completion) {
    TokenUsage u;
    u.prompt_tokens = static_cast<long long>(prompt.size() / 4 + 1);
    u.completion_tokens = static_cast<long long>(completion.size() / 4 + 1);
    return u;
}

// "(N) rest" on a prompt body line.
bool split_numbered_line(const std::string& line, int& slot, std::string& rest) {
    std::size_t i = 0;
    while (i < line.size() && line[i] == ' ') ++i;
    if (i >= line.size() || line[i] != '(') return false;
    std::size_t j = i + 1;
    while (j < line.size() && line[j] >= '0' && line[j] <= '9') ++j;
    if (j == i + 1 || j >= line.size() || line[j] != ')') return false;
    slot = std::stoi(line.substr(i + 1, j - i - 1));
    rest = trim(line.substr(j + 1));
    return true;
}

}  // namespace

ScriptedOracle::ScriptedOracle(std::string identity, const DomainRegistry& registry,
                               double noise_rate, uint64_t seed)
    : identity_(std::move(identity)), registry_(registry), noise_rate_(noise_rate), seed_(seed) {
    if (noise_rate < 0.0 || noise_rate > 1.0) {
        throw ConfigError("scripted oracle: noise_rate must be in [0,1]");
    }
}

void ScriptedOracle::add_domain_script(const std::string& domain_id, DomainScript script) {
    const DomainSpec& spec = registry_.at(domain_id);
    for (const auto& [subject, value] : script.answers) {
        by_prompt_[render_audit_prompt(spec, subject)] = {value, &spec};
    }
    scripts_[domain_id] = std::move(script);
}

void ScriptedOracle::add_answer(const std::string& domain_id, const std::string& subject,
                                double value) {
    const DomainSpec& spec = registry_.at(domain_id);
    scripts_[domain_id].answers[subject] = value;
    by_prompt_[render_audit_prompt(spec, subject)] = {value, &spec};
}

std::shared_ptr<ScriptedOracle> ScriptedOracle::load_file(const std::string& path,
                                                          const DomainRegistry& registry,
                                                          double noise_rate, uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scripted endpoint file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scripted endpoint file '" + path + "': " + e.what());
    }
    auto oracle = std::make_shared<ScriptedOracle>(j.value("identity", std::string("scripted")),
                                                   registry, noise_rate, seed);
    for (const auto& [domain_id, dj] : j.at("domains").items()) {
        DomainScript script;
        if (dj.contains("generation_rounds")) {
            script.generation_rounds = dj.at("generation_rounds").get<std::vector<std::string>>();
        }
        if (dj.contains("answers")) {
            for (const auto& [subject, value] : dj.at("answers").items()) {
                script.answers[subject] = value.get<double>();
            }
        }
        oracle->add_domain_script(domain_id, std::move(script));
    }
    return oracle;
}

Response ScriptedOracle::generate(const Request& req) {
    std::string text;
    if (starts_with(req.prompt, kGenerationTaskPrefix)) {
        text = answer_generation(req.prompt);
    } else {
        text = answer_batch(req.prompt, req);
    }
    Response resp;
    resp.text = text;
    resp.usage = synthetic_usage(req.prompt, text);
    return resp;
}

std::string ScriptedOracle::answer_generation(const std::string& prompt) {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [domain_id, script] : scripts_) {
        const DomainSpec* spec = registry_.find(domain_id);
        if (!spec) continue;
        const std::string needle = "\"" + spec->display_name + "\"";
        if (prompt.find(needle) == std::string::npos) continue;
        const int round = round_counters_[domain_id]++;
        if (round < static_cast<int>(script.generation_rounds.size())) {
            return script.generation_rounds[static_cast<std::size_t>(round)];
        }
        return "";  // script exhausted: zero-yield round
    }
    return "";
}

std::string ScriptedOracle::answer_batch(const std::string& prompt, const Request& req) {
    std::istringstream in(prompt);
    std::string line;
    std::string out;
    int slot = 0;
    std::string probe_prompt;
    while (std::getline(in, line)) {
        if (!split_numbered_line(line, slot, probe_prompt)) continue;
        if (!out.empty()) out += '\n';
        const auto it = by_prompt_.find(probe_prompt);
        if (it == by_prompt_.end()) {
            out += "(" + std::to_string(slot) + ") I cannot answer this one.";
            continue;
        }
        double value = it->second.value;
        if (noise_rate_ > 0.0) {
            const uint64_t stream =
                derive_stream(seed_, req.ordinal, static_cast<uint64_t>(slot));
            Rng rng(stream);
            if (rng.bernoulli(noise_rate_)) {
                value = perturbed(value, *it->second.spec, splitmix64(stream));
            }
        }
        out += "(" + std::to_string(slot) + ") " + format_double(value);
    }
    return out;
}

// A value guaranteed to violate the domain match rule against `value`,
// kept inside the domain range when the range allows it.
double ScriptedOracle::perturbed(double value, const DomainSpec& spec, uint64_t stream) const {
    const MatchRule& rule = spec.match_rule;
    double delta = 0.0;
    switch (rule.kind) {
        case MatchKind::ExactInteger:
            delta = 1.0 + static_cast<double>(stream % 7);
            break;
        case MatchKind::AbsoluteTolerance:
            delta = rule.tolerance * 10.0 + 1.0 + static_cast<double>(stream % 5);
            break;
        case MatchKind::RelativeTolerance: {
            const double f = 3.0 * rule.tolerance / (1.0 - std::min(rule.tolerance, 0.5)) + 0.01;
            delta = std::max(std::fabs(value) * f, 10.0 * kRelativeEpsilon + 1e-6);
            break;
        }
    }
    double candidate = value + delta;
    if (!validate_range(spec, candidate)) candidate = value - delta;
    if (!validate_range(spec, candidate)) candidate = value + delta;  // out of range still mismatches
    return candidate;
}

MixedOracle::MixedOracle(MixedRoutingPolicy policy) : policy_(std::move(policy)) {
    if (policy_.pi < 0.0 || policy_.pi > 1.0) {
        throw ConfigError("mixed oracle: pi must be in [0,1]");
    }
    if (!policy_.reference || !policy_.substitute) {
        throw ConfigError("mixed oracle: both backends are required");
    }
}

std::string MixedOracle::identity() const {
    return "mixed(" + policy_.reference->identity() + "," + policy_.substitute->identity() + ")";
}

Response MixedOracle::generate(const Request& req) {
    Rng rng(derive_stream(policy_.seed, req.ordinal));
    const bool to_substitute = rng.bernoulli(policy_.pi);
    if (to_substitute) {
        substitute_served_.fetch_add(1);
        return policy_.substitute->generate(req);
    }
    return policy_.reference->generate(req);
}

}  // namespace kbf
