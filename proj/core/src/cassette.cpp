#include "kbf/cassette.hpp"

#include <fstream>

#include <json.hpp>

#include "kbf/errors.hpp"

namespace kbf {

namespace {

bool looks_like_credential(const std::string& field) {
    const std::string f = [&] {
        std::string s;
        for (char c : field) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        return s;
    }();
    return f.find("key") != std::string::npos || f.find("token") != std::string::npos ||
           f.find("secret") != std::string::npos || f.find("auth") != std::string::npos;
}

nlohmann::ordered_json transcript_to_json(const Transcript& t) {
    nlohmann::ordered_json j;
    j["key"] = t.key;
    j["identity"] = t.identity;
    j["prompt"] = t.prompt;
    nlohmann::ordered_json cfg;
    cfg["system_prompt"] = t.config.system_prompt;
    cfg["temperature"] = t.config.temperature;
    cfg["max_output_tokens"] = t.config.max_output_tokens;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
    for (const auto& [k, v] : t.config.extra) {
        if (!looks_like_credential(k)) extra[k] = v;
    }
    cfg["extra"] = extra;
    j["config"] = cfg;
    j["attempt"] = t.attempt;
    nlohmann::ordered_json resp;
    resp["text"] = t.response_text;
    resp["finish_reason"] = t.finish_reason;
    resp["usage"] = {{"prompt_tokens", t.usage.prompt_tokens},
                     {"completion_tokens", t.usage.completion_tokens}};
    j["response"] = resp;
    j["timestamp"] = t.timestamp;
    return j;
}

Transcript transcript_from_json(const nlohmann::json& j) {
    Transcript t;
    t.key = j.at("key").get<std::string>();
    t.identity = j.at("identity").get<std::string>();
    t.prompt = j.at("prompt").get<std::string>();
    const auto& cfg = j.at("config");
    t.config.system_prompt = cfg.at("system_prompt").get<std::string>();
    t.config.temperature = cfg.at("temperature").get<double>();
    t.config.max_output_tokens = cfg.at("max_output_tokens").get<int>();
    for (const auto& [k, v] : cfg.at("extra").items()) {
        t.config.extra[k] = v.get<std::string>();
    }
    t.attempt = j.at("attempt").get<int>();
    const auto& resp = j.at("response");
    t.response_text = resp.at("text").get<std::string>();
    t.finish_reason = resp.at("finish_reason").get<std::string>();
    t.usage.prompt_tokens = resp.at("usage").at("prompt_tokens").get<long long>();
    t.usage.completion_tokens = resp.at("usage").at("completion_tokens").get<long long>();
    t.timestamp = j.value("timestamp", std::string());
    return t;
}

}  // namespace

std::shared_ptr<Cassette> Cassette::open_for_record(const std::string& path) {
    auto c = std::shared_ptr<Cassette>(new Cassette());
    c->path_ = path;
    std::ifstream probe(path);
    const bool fresh = !probe || probe.peek() == std::ifstream::traits_type::eof();
    probe.close();
    c->writer_ = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*c->writer_) throw ConfigError("cannot open cassette for record: " + path);
    if (fresh) {
        nlohmann::ordered_json header;
        header["schema_version"] = kCassetteSchemaVersion;
        header["kind"] = "kbf-cassette";
        *c->writer_ << header.dump() << '\n';
        c->writer_->flush();
    }
    return c;
}

std::shared_ptr<Cassette> Cassette::open_for_replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cassette not found: " + path);
    auto c = std::shared_ptr<Cassette>(new Cassette());
    c->path_ = path;
    std::string line;
    bool saw_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("cassette '" + path + "' line " + std::to_string(lineno) +
                              ": " + e.what());
        }
        if (!saw_header) {
            if (j.value("kind", std::string()) != "kbf-cassette" ||
                j.value("schema_version", 0) != kCassetteSchemaVersion) {
                throw ConfigError("cassette '" + path + "': bad header");
            }
            saw_header = true;
            continue;
        }
        Transcript t = transcript_from_json(j);
        c->total_tokens_ += t.usage.total();
        c->by_key_[t.key].push_back(std::move(t));
        ++c->total_entries_;
    }
    if (!saw_header) throw ConfigError("cassette '" + path + "': empty file");
    return c;
}

void Cassette::append(const Transcript& t) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!writer_) throw ConfigError("cassette '" + path_ + "' is not open for record");
    *writer_ << transcript_to_json(t).dump() << '\n';
    writer_->flush();
    by_key_[t.key].push_back(t);
    ++total_entries_;
    total_tokens_ += t.usage.total();
}

Response Cassette::take(const std::string& key, std::string* recorded_identity) {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = by_key_.find(key);
    if (it == by_key_.end() || it->second.empty()) {
        throw ReplayMiss("request not in cassette (key " + key + ")");
    }
    std::size_t& cur = cursor_[key];
    const Transcript& t = it->second[std::min(cur, it->second.size() - 1)];
    if (cur < it->second.size()) ++cur;
    if (recorded_identity) *recorded_identity = t.identity;
    Response resp;
    resp.text = t.response_text;
    resp.finish_reason = t.finish_reason;
    resp.usage = t.usage;
    return resp;
}

bool Cassette::contains(const std::string& key) const {
    return by_key_.count(key) > 0;
}

RecordingOracle::RecordingOracle(std::shared_ptr<Oracle> inner, std::shared_ptr<Cassette> cassette)
    : inner_(std::move(inner)), cassette_(std::move(cassette)) {}

Response RecordingOracle::generate(const Request& req) {
    Response resp = inner_->generate(req);
    Transcript t;
    t.identity = inner_->identity();
    t.prompt = req.prompt;
    t.config = req.config;
    t.attempt = req.attempt;
    t.response_text = resp.text;
    t.finish_reason = resp.finish_reason;
    t.usage = resp.usage;
    t.key = canonical_request_key(t.identity, req);
    cassette_->append(t);
    return resp;
}

ReplayOracle::ReplayOracle(std::string identity, std::shared_ptr<Cassette> cassette)
    : identity_(std::move(identity)), cassette_(std::move(cassette)) {}

Response ReplayOracle::generate(const Request& req) {
    return cassette_->take(canonical_request_key(identity_, req));
}

}  // namespace kbf
