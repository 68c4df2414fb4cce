#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace kbf {

// Requested deployment configuration for one query.
struct EndpointConfig {
    std::string system_prompt;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    // Provider pinning, routing flags and other pass-through request fields.
    std::map<std::string, std::string> extra;
};

struct TokenUsage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
    long long total() const { return prompt_tokens + completion_tokens; }
};

struct Response {
    std::string text;
    std::string finish_reason = "stop";
    TokenUsage usage;
};

// One attempt-level request as seen by a backend. The attempt index
// distinguishes retries of the same logical query.
struct Request {
    std::string prompt;
    EndpointConfig config;
    int attempt = 0;
    uint64_t ordinal = 0;  // per-endpoint request counter, assigned at dispatch
};

// Canonical serialization of the replay-match key. Bit-exact contract:
// identity, prompt, system prompt, temperature (%.17g via shortest
// round-trip), max tokens, sorted extra pairs and the attempt index joined
// with 0x1f separators, hashed with FNV-1a 64 and rendered as 16 hex chars.
std::string canonical_request_key(const std::string& identity, const Request& req);

struct Transcript {
    std::string identity;
    std::string prompt;
    EndpointConfig config;
    int attempt = 0;
    uint64_t ordinal = 0;
    std::string response_text;
    std::string finish_reason;
    TokenUsage usage;
    std::string timestamp;  // empty in deterministic mode
    std::string key;        // canonical_request_key at record time
};

// Raw response source: live HTTP, scripted simulator, mixed router or
// cassette replay. Implementations may throw TransportFailure,
// RefusedByPolicy or ReplayMiss.
class Oracle {
  public:
    virtual ~Oracle() = default;
    virtual std::string identity() const = 0;
    virtual Response generate(const Request& req) = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    double initial_backoff_seconds = 1.0;  // doubles per attempt; 0 in tests
};

// Token accounting across an endpoint's lifetime. Never decreases.
class Budget {
  public:
    void add(const TokenUsage& usage);
    long long total_tokens() const { return total_tokens_.load(); }
    long long request_count() const { return requests_.load(); }
    void set_limit(long long max_total_tokens) { limit_ = max_total_tokens; }
    bool exhausted() const;

  private:
    std::atomic<long long> total_tokens_{0};
    std::atomic<long long> requests_{0};
    long long limit_ = 0;  // 0 = unlimited
};

// Serialized append-only transcript store (single-writer appender).
class TranscriptLog {
  public:
    void append(Transcript t);
    std::vector<Transcript> snapshot() const;
    std::size_t size() const;

  private:
    mutable std::mutex mu_;
    std::vector<Transcript> entries_;
};

// The uniform handle every higher layer talks to: owns a backend, applies
// the retry policy with exponential backoff, accounts the budget and
// records transcripts. Concurrency-safe up to the configured in-flight
// bound of the caller; ordinals are assigned atomically.
class Endpoint {
  public:
    Endpoint(std::string name, std::shared_ptr<Oracle> backend,
             RetryPolicy retry = {}, std::shared_ptr<TranscriptLog> log = nullptr);

    const std::string& name() const { return name_; }
    std::string identity() const { return backend_->identity(); }

    // Raw response text. Transient transport failures retry up to the
    // policy limit; each attempt gets a fresh attempt index.
    std::string query(const std::string& prompt, const EndpointConfig& config);

    // Pre-assign the request ordinal so a parallel dispatch schedule cannot
    // change which random stream a scripted backend draws from.
    uint64_t reserve_ordinal() { return next_ordinal_.fetch_add(1); }
    std::string query(const std::string& prompt, const EndpointConfig& config,
                      uint64_t ordinal);

    Budget& budget() { return budget_; }
    const Budget& budget() const { return budget_; }
    std::shared_ptr<TranscriptLog> transcript_log() const { return log_; }
    std::shared_ptr<Oracle> backend() const { return backend_; }

    // Wall-clock timestamps in transcripts when false (default true keeps
    // recorded fixtures byte-stable).
    void set_deterministic_time(bool on) { deterministic_time_ = on; }

  private:
    std::string name_;
    std::shared_ptr<Oracle> backend_;
    RetryPolicy retry_;
    std::shared_ptr<TranscriptLog> log_;
    Budget budget_;
    std::atomic<uint64_t> next_ordinal_{0};
    bool deterministic_time_ = true;
};

// Run `tasks` with at most `max_in_flight` running concurrently; result i
// lands in slot i, so parallelism never reorders outputs.
void parallel_for_ordered(std::size_t count, int max_in_flight,
                          const std::function<void(std::size_t)>& task);

}  // namespace kbf
