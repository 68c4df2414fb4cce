#include "kbf/oracle.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <semaphore>
#include <thread>

#include "kbf/errors.hpp"
#include "kbf/text.hpp"

namespace kbf {

namespace {
constexpr char kSep = '\x1f';
}

std::string canonical_request_key(const std::string& identity, const Request& req) {
    std::string s;
    s.reserve(identity.size() + req.prompt.size() + req.config.system_prompt.size() + 64);
    s += identity;
    s += kSep;
    s += req.prompt;
    s += kSep;
    s += req.config.system_prompt;
    s += kSep;
    s += format_double(req.config.temperature);
    s += kSep;
    s += std::to_string(req.config.max_output_tokens);
    s += kSep;
    for (const auto& [k, v] : req.config.extra) {  // std::map: already sorted
        s += k;
        s += '=';
        s += v;
        s += kSep;
    }
    s += std::to_string(req.attempt);
    return to_hex(fnv1a64(s));
}

void Budget::add(const TokenUsage& usage) {
    total_tokens_ += usage.total();
    requests_ += 1;
}

bool Budget::exhausted() const {
    return limit_ > 0 && total_tokens_.load() >= limit_;
}

void TranscriptLog::append(Transcript t) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_.push_back(std::move(t));
}

std::vector<Transcript> TranscriptLog::snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_;
}

std::size_t TranscriptLog::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

Endpoint::Endpoint(std::string name, std::shared_ptr<Oracle> backend, RetryPolicy retry,
                   std::shared_ptr<TranscriptLog> log)
    : name_(std::move(name)), backend_(std::move(backend)), retry_(retry), log_(std::move(log)) {
    if (!log_) log_ = std::make_shared<TranscriptLog>();
}

namespace {

std::string now_utc() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string Endpoint::query(const std::string& prompt, const EndpointConfig& config) {
    return query(prompt, config, reserve_ordinal());
}

std::string Endpoint::query(const std::string& prompt, const EndpointConfig& config,
                            uint64_t ordinal) {
    if (budget_.exhausted()) {
        throw BudgetExceeded("endpoint '" + name_ + "': token budget exhausted");
    }
    std::string last_error;
    for (int attempt = 0; attempt < retry_.max_attempts; ++attempt) {
        if (attempt > 0 && retry_.initial_backoff_seconds > 0) {
            const double seconds = retry_.initial_backoff_seconds * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
        }
        Request req{prompt, config, attempt, ordinal};
        try {
            Response resp = backend_->generate(req);
            budget_.add(resp.usage);
            Transcript t;
            t.identity = backend_->identity();
            t.prompt = prompt;
            t.config = config;
            t.attempt = attempt;
            t.ordinal = ordinal;
            t.response_text = resp.text;
            t.finish_reason = resp.finish_reason;
            t.usage = resp.usage;
            t.timestamp = deterministic_time_ ? std::string() : now_utc();
            t.key = canonical_request_key(t.identity, req);
            log_->append(std::move(t));
            return resp.text;
        } catch (const TransportFailure& e) {
            last_error = e.what();
        }
        // RefusedByPolicy, ReplayMiss, BudgetExceeded propagate: retrying
        // cannot change them.
    }
    throw TransportFailure("endpoint '" + name_ + "': " + last_error + " (after " +
                           std::to_string(retry_.max_attempts) + " attempts)");
}

void parallel_for_ordered(std::size_t count, int max_in_flight,
                          const std::function<void(std::size_t)>& task) {
    if (count == 0) return;
    if (max_in_flight <= 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::counting_semaphore<256> slots(std::min(max_in_flight, 256));
    std::vector<std::future<void>> futures;
    futures.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        slots.acquire();
        futures.push_back(std::async(std::launch::async, [&task, &slots, i]() {
            try {
                task(i);
            } catch (...) {
                slots.release();
                throw;
            }
            slots.release();
        }));
    }
    for (auto& f : futures) f.get();
}

}  // namespace kbf
