#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "kbf/oracle.hpp"

namespace kbf {

inline constexpr int kCassetteSchemaVersion = 1;

// Line-delimited transcript store: one JSON Transcript per line, keyed by
// canonical_request_key. Auth material never reaches the cassette because
// keys live outside EndpointConfig; the writer additionally drops any extra
// field whose name suggests a credential.
class Cassette {
  public:
    // Opens for append, creating the file (and a schema header line) when
    // absent.
    static std::shared_ptr<Cassette> open_for_record(const std::string& path);
    // Loads an existing cassette fully into memory. Throws ConfigError when
    // the file is absent or malformed.
    static std::shared_ptr<Cassette> open_for_replay(const std::string& path);

    void append(const Transcript& t);

    // FIFO per key: repeated identical requests replay in recorded order;
    // an exhausted key keeps serving its last entry (replay is read-only
    // deterministic). A key never recorded throws ReplayMiss.
    Response take(const std::string& key, std::string* recorded_identity = nullptr);

    bool contains(const std::string& key) const;
    std::size_t size() const { return total_entries_; }
    long long total_tokens() const { return total_tokens_; }
    const std::string& path() const { return path_; }

  private:
    Cassette() = default;

    std::string path_;
    std::mutex mu_;
    std::map<std::string, std::vector<Transcript>> by_key_;
    std::map<std::string, std::size_t> cursor_;
    std::size_t total_entries_ = 0;
    long long total_tokens_ = 0;
    std::unique_ptr<std::ofstream> writer_;
};

// Decorator around a live backend: forwards every attempt and appends the
// Transcript to the cassette.
class RecordingOracle : public Oracle {
  public:
    RecordingOracle(std::shared_ptr<Oracle> inner, std::shared_ptr<Cassette> cassette);
    std::string identity() const override { return inner_->identity(); }
    Response generate(const Request& req) override;

  private:
    std::shared_ptr<Oracle> inner_;
    std::shared_ptr<Cassette> cassette_;
};

// Serves recorded Transcripts; never performs network or backend I/O.
class ReplayOracle : public Oracle {
  public:
    ReplayOracle(std::string identity, std::shared_ptr<Cassette> cassette);
    std::string identity() const override { return identity_; }
    Response generate(const Request& req) override;

  private:
    std::string identity_;
    std::shared_ptr<Cassette> cassette_;
};

}  // namespace kbf
