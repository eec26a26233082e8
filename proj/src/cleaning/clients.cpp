#include "cleaning/clients.hpp"

#include <httplib.h>

#include <cmath>

#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/utf8.hpp"

namespace forge::cleaning {

using corpus::Role;

void MockCorrector::maybe_fail(const char* op) {
  std::lock_guard lock(mu_);
  ++calls_;
  if (opts_.always_fail || calls_ <= opts_.fail_first_calls)
    throw ClientError(std::string("mock-corrector: injected failure on ") + op + " (call " +
                      std::to_string(calls_) + ")");
}

int MockCorrector::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string MockCorrector::correct(const std::string& text, const corpus::Dialogue&) {
  maybe_fail("correct");
  return text + opts_.suffix;
}

std::vector<corpus::Turn> MockCorrector::backfill(const corpus::Dialogue& truncated) {
  maybe_fail("backfill");
  if (opts_.backfill == BackfillStyle::kEmpty) return {};

  std::string user_speaker = "ctx-user";
  std::string assistant_speaker = "ctx-assistant";
  for (const auto& t : truncated.turns) {
    if (t.role == Role::kUser) user_speaker = t.speaker_id;
    if (t.role == Role::kAssistant) assistant_speaker = t.speaker_id;
  }
  const auto topic = stable_hash64(truncated.id) % 1000;
  auto turn = [](Role r, std::string speaker, std::string text) {
    corpus::Turn t;
    t.role = r;
    t.speaker_id = std::move(speaker);
    t.text = std::move(text);
    return t;
  };
  const std::string ask = "Earlier we were discussing topic " + std::to_string(topic) + ".";
  const std::string answer = "Right, topic " + std::to_string(topic) + " was the background.";

  if (opts_.backfill == BackfillStyle::kSameRoleRun)
    return {turn(Role::kUser, user_speaker, ask), turn(Role::kUser, user_speaker, ask)};
  if (!truncated.turns.empty() && truncated.turns.front().role == Role::kAssistant)
    return {turn(Role::kUser, user_speaker, ask)};
  return {turn(Role::kUser, user_speaker, ask), turn(Role::kAssistant, assistant_speaker, answer)};
}

corpus::AudioTokenSpan MockSynth::synthesize(const std::string& text, const std::string& speaker_id) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
    if (calls_ <= fail_first_calls_)
      throw ClientError("mock-synth: injected failure (call " + std::to_string(calls_) + ")");
  }
  corpus::AudioTokenSpan a;
  a.frame_rate_hz = corpus::kTokenRateHz;
  const std::size_t n = std::max<std::size_t>(1, 3 * utf8::length(text));
  std::uint64_t state = stable_hash64(speaker_id + '\x1f' + text);
  a.token_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    state = mix64(state);
    a.token_ids.push_back(static_cast<std::int64_t>(state % 4096));
  }
  a.duration_s = static_cast<double>(n) / a.frame_rate_hz;
  return a;
}

Json http_call(const HttpEndpoint& ep, const std::string& operation, const Json& payload,
               const std::string& provenance_id) {
  const auto scheme_end = ep.url.find("://");
  if (ep.url.rfind("http://", 0) != 0) throw ClientError("only http:// endpoints are supported: " + ep.url);
  const auto path_start = ep.url.find('/', scheme_end + 3);
  const std::string base = ep.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : ep.url.substr(path_start);

  httplib::Client cli(base);
  const auto sec = ep.timeout_ms / 1000;
  const auto usec = (ep.timeout_ms % 1000) * 1000;
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);

  Json req;
  req["operation"] = operation;
  req["payload"] = payload;
  req["provenance_id"] = provenance_id;
  auto res = cli.Post(path, req.dump(), "application/json");
  if (!res) throw ClientError(operation + ": request to " + ep.url + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw ClientError(operation + ": " + ep.url + " returned HTTP " + std::to_string(res->status));
  try {
    auto body = Json::parse(res->body);
    if (!body.contains("result")) throw ClientError(operation + ": response has no `result`");
    return body["result"];
  } catch (const nlohmann::json::exception& e) {
    throw ClientError(operation + ": malformed response: " + e.what());
  }
}

std::string HttpCorrector::correct(const std::string& text, const corpus::Dialogue& context) {
  Json payload{{"text", text}, {"dialogue", corpus::dialogue_to_json(context)}};
  auto r = http_call(ep_, "correct", payload, context.id);
  if (!r.is_string()) throw ClientError("correct: expected a string result");
  return r.get<std::string>();
}

std::vector<corpus::Turn> HttpCorrector::backfill(const corpus::Dialogue& truncated) {
  auto r = http_call(ep_, "backfill", Json{{"dialogue", corpus::dialogue_to_json(truncated)}}, truncated.id);
  if (!r.is_array()) throw ClientError("backfill: expected an array of turns");
  // Reuse the corpus schema for the returned turns.
  try {
    Json shell;
    shell["id"] = truncated.id;
    shell["language"] = corpus::to_string(truncated.language);
    shell["source"] = corpus::to_string(truncated.source);
    shell["turns"] = r;
    return corpus::dialogue_from_json(shell).turns;
  } catch (const ParseError& e) {
    throw ClientError(std::string("backfill: malformed turn: ") + e.what());
  }
}

corpus::AudioTokenSpan HttpSynth::synthesize(const std::string& text, const std::string& speaker_id) {
  auto r = http_call(ep_, "synthesize", Json{{"text", text}, {"speaker_id", speaker_id}}, speaker_id);
  try {
    corpus::AudioTokenSpan a;
    a.token_ids = r.at("token_ids").get<std::vector<std::int64_t>>();
    a.frame_rate_hz = r.at("frame_rate_hz").get<double>();
    a.duration_s = r.at("duration_s").get<double>();
    const auto want = corpus::expected_token_count(a.duration_s, a.frame_rate_hz);
    if (std::llabs(static_cast<std::int64_t>(a.token_ids.size()) - want) > 1)
      throw ClientError("synthesize: token count does not match duration");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ClientError(std::string("synthesize: malformed result: ") + e.what());
  }
}

ClientConfig load_client_config(const Json& j) {
  ClientConfig c;
  if (!j.is_object()) throw ParseError("client config: expected an object");
  c.kind = j.value("kind", c.kind);
  c.corrector_url = j.value("corrector_url", c.corrector_url);
  c.synth_url = j.value("synth_url", c.synth_url);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.retries = j.value("retries", c.retries);
  c.in_flight = j.value("in_flight", c.in_flight);
  c.mock_suffix = j.value("mock_suffix", c.mock_suffix);
  c.synthesize_backfill = j.value("synthesize_backfill", c.synthesize_backfill);
  if (c.kind != "mock" && c.kind != "http") throw ParseError("client config: kind must be mock or http");
  if (c.retries < 0) throw ParseError("client config: retries must be >= 0");
  if (c.timeout_ms <= 0) throw ParseError("client config: timeout_ms must be > 0");
  if (c.in_flight == 0) throw ParseError("client config: in_flight must be >= 1");
  if (c.kind == "http" && (c.corrector_url.empty() || c.synth_url.empty()))
    throw ParseError("client config: http clients need corrector_url and synth_url");
  return c;
}

Json client_config_to_json(const ClientConfig& c) {
  Json j;
  j["kind"] = c.kind;
  j["corrector_url"] = c.corrector_url;
  j["synth_url"] = c.synth_url;
  j["timeout_ms"] = c.timeout_ms;
  j["retries"] = c.retries;
  j["in_flight"] = c.in_flight;
  j["mock_suffix"] = c.mock_suffix;
  j["synthesize_backfill"] = c.synthesize_backfill;
  return j;
}

Clients make_clients(const ClientConfig& c) {
  Clients out;
  if (c.kind == "http") {
    out.corrector = std::make_unique<HttpCorrector>(HttpEndpoint{c.corrector_url, c.timeout_ms});
    out.synth = std::make_unique<HttpSynth>(HttpEndpoint{c.synth_url, c.timeout_ms});
  } else {
    out.corrector = std::make_unique<MockCorrector>(MockCorrectorOptions{c.mock_suffix});
    out.synth = std::make_unique<MockSynth>();
  }
  return out;
}

}  // namespace forge::cleaning
