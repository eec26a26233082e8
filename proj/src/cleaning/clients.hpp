#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"
#include "util/ojson.hpp"

namespace forge::cleaning {

// Text-side external service (an LLM in production). Implementations throw
// ClientError on failure and must not touch the corpus.
class CorrectorClient {
 public:
  virtual ~CorrectorClient() = default;
  virtual std::string name() const = 0;
  virtual std::string correct(const std::string& text, const corpus::Dialogue& context) = 0;
  // Turns to prepend to a truncated dialogue.
  virtual std::vector<corpus::Turn> backfill(const corpus::Dialogue& truncated) = 0;
};

// Speech-side external service (a TTS model in production).
class SynthClient {
 public:
  virtual ~SynthClient() = default;
  virtual std::string name() const = 0;
  virtual corpus::AudioTokenSpan synthesize(const std::string& text, const std::string& speaker_id) = 0;
};

enum class BackfillStyle {
  kAuto,         // one user turn before an assistant-initial fragment, else a user/assistant pair
  kEmpty,        // nothing to add
  kSameRoleRun,  // two user turns in a row (invalid on purpose)
};

struct MockCorrectorOptions {
  std::string suffix;             // appended to corrected text; empty = identity
  int fail_first_calls = 0;       // fault injection: this many leading calls throw
  bool always_fail = false;
  BackfillStyle backfill = BackfillStyle::kAuto;
};

class MockCorrector final : public CorrectorClient {
 public:
  explicit MockCorrector(MockCorrectorOptions opts = {}) : opts_(std::move(opts)) {}
  std::string name() const override { return "mock-corrector"; }
  std::string correct(const std::string& text, const corpus::Dialogue& context) override;
  std::vector<corpus::Turn> backfill(const corpus::Dialogue& truncated) override;
  int calls() const;

 private:
  void maybe_fail(const char* op);

  MockCorrectorOptions opts_;
  mutable std::mutex mu_;
  int calls_ = 0;
};

// Pseudo-tokens derived from a hash of (text, speaker): three tokens per
// character at 12.5 Hz.
class MockSynth final : public SynthClient {
 public:
  explicit MockSynth(int fail_first_calls = 0) : fail_first_calls_(fail_first_calls) {}
  std::string name() const override { return "mock-synth"; }
  corpus::AudioTokenSpan synthesize(const std::string& text, const std::string& speaker_id) override;

 private:
  std::mutex mu_;
  int fail_first_calls_;
  int calls_ = 0;
};

struct HttpEndpoint {
  std::string url;  // http://host:port/path
  int timeout_ms = 10000;
};

// POSTs {"operation", "payload", "provenance_id"} and reads {"result"}.
class HttpCorrector final : public CorrectorClient {
 public:
  explicit HttpCorrector(HttpEndpoint ep) : ep_(std::move(ep)) {}
  std::string name() const override { return "http-corrector"; }
  std::string correct(const std::string& text, const corpus::Dialogue& context) override;
  std::vector<corpus::Turn> backfill(const corpus::Dialogue& truncated) override;

 private:
  HttpEndpoint ep_;
};

class HttpSynth final : public SynthClient {
 public:
  explicit HttpSynth(HttpEndpoint ep) : ep_(std::move(ep)) {}
  std::string name() const override { return "http-synth"; }
  corpus::AudioTokenSpan synthesize(const std::string& text, const std::string& speaker_id) override;

 private:
  HttpEndpoint ep_;
};

// One request/response exchange; throws ClientError on transport errors,
// non-2xx status or a malformed body.
Json http_call(const HttpEndpoint& ep, const std::string& operation, const Json& payload,
               const std::string& provenance_id);

struct ClientConfig {
  std::string kind = "mock";  // mock | http
  std::string corrector_url;
  std::string synth_url;
  int timeout_ms = 10000;
  int retries = 3;
  unsigned in_flight = 4;
  std::string mock_suffix;
  bool synthesize_backfill = false;
};

ClientConfig load_client_config(const Json& j);
Json client_config_to_json(const ClientConfig& c);

struct Clients {
  std::unique_ptr<CorrectorClient> corrector;
  std::unique_ptr<SynthClient> synth;
};

Clients make_clients(const ClientConfig& c);

}  // namespace forge::cleaning
