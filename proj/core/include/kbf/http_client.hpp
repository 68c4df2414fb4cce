#pragma once

#include <memory>
#include <string>

#include "kbf/oracle.hpp"

namespace kbf {

// Count of network operations issued by HttpOracle across the process.
// Hermetic tests assert this stays zero.
long long http_request_count();

// OpenAI-compatible chat-completions backend: POST {base_url}/v1/chat/completions
// with a system+user messages array; the response text is the first choice's
// message content. The bearer token is read from `api_key_env` at query time
// and never stored on the object or in transcripts.
class HttpOracle : public Oracle {
  public:
    HttpOracle(std::string name, std::string base_url, std::string model,
               std::string api_key_env);

    std::string identity() const override;
    Response generate(const Request& req) override;

  private:
    std::string name_;
    std::string base_url_;
    std::string model_;
    std::string api_key_env_;
};

}  // namespace kbf
