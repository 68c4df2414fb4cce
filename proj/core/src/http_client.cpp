#include "kbf/http_client.hpp"

#include <atomic>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "kbf/errors.hpp"

namespace kbf {

namespace {
std::atomic<long long> g_http_requests{0};
}

long long http_request_count() {
    return g_http_requests.load();
}

HttpOracle::HttpOracle(std::string name, std::string base_url, std::string model,
                       std::string api_key_env)
    : name_(std::move(name)),
      base_url_(std::move(base_url)),
      model_(std::move(model)),
      api_key_env_(std::move(api_key_env)) {}

std::string HttpOracle::identity() const {
    return name_ + ":" + model_;
}

Response HttpOracle::generate(const Request& req) {
    g_http_requests.fetch_add(1);

    nlohmann::json body;
    body["model"] = model_;
    body["messages"] = nlohmann::json::array();
    if (!req.config.system_prompt.empty()) {
        body["messages"].push_back({{"role", "system"}, {"content", req.config.system_prompt}});
    }
    body["messages"].push_back({{"role", "user"}, {"content", req.prompt}});
    body["temperature"] = req.config.temperature;
    body["max_tokens"] = req.config.max_output_tokens;
    for (const auto& [k, v] : req.config.extra) {
        // provider pinning and routing flags pass through verbatim
        body[k] = v;
    }

    httplib::Client client(base_url_);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!api_key_env_.empty()) {
        if (const char* key = std::getenv(api_key_env_.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        } else {
            throw ConfigError("endpoint '" + name_ + "': env var " + api_key_env_ + " is not set");
        }
    }

    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        throw TransportFailure("endpoint '" + name_ + "': " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransportFailure("endpoint '" + name_ + "': HTTP " + std::to_string(res->status));
    }
    if (res->status >= 400) {
        throw RefusedByPolicy("endpoint '" + name_ + "': HTTP " + std::to_string(res->status) +
                              " " + res->body.substr(0, 200));
    }

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw TransportFailure("endpoint '" + name_ + "': bad JSON in response: " + e.what());
    }

    Response out;
    try {
        const auto& choice = j.at("choices").at(0);
        out.text = choice.at("message").at("content").get<std::string>();
        out.finish_reason = choice.value("finish_reason", "stop");
    } catch (const nlohmann::json::exception& e) {
        throw TransportFailure("endpoint '" + name_ + "': unexpected response shape: " + e.what());
    }
    if (j.contains("usage")) {
        out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0LL);
        out.usage.completion_tokens = j["usage"].value("completion_tokens", 0LL);
    }
    return out;
}

}  // namespace kbf
