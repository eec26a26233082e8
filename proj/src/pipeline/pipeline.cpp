#include "pipeline/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cleaning/cleaning.hpp"
#include "corpus/corpus.hpp"
#include "loss/loss.hpp"
#include "metrics/metrics.hpp"
#include "schedule/schedule.hpp"
#include "synth/generator.hpp"
#include "talker/talker.hpp"
#include "templates/templates.hpp"
#include "thinker/thinker.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/parallel.hpp"

#ifndef FORGE_VERSION_STRING
#define FORGE_VERSION_STRING "0.0.0"
#endif

namespace forge::pipeline {

namespace fs = std::filesystem;

std::string_view tool_version() { return FORGE_VERSION_STRING; }

std::string config_hash(const Json& config) { return sha256_hex(config.dump()); }

Json manifest_identity(const Manifest& m) {
  Json j;
  j["command"] = m.command;
  j["tool_version"] = tool_version();
  j["master_seed"] = m.master_seed;
  j["config"] = m.config;
  j["config_hash"] = config_hash(m.config);
  Json in = Json::object();
  for (const auto& [k, v] : m.inputs) in[k] = v;
  j["inputs"] = std::move(in);
  Json out = Json::object();
  for (const auto& [k, v] : m.outputs) out[k] = v;
  j["outputs"] = std::move(out);
  j["counts"] = m.counts;
  return j;
}

Json manifest_to_json(const Manifest& m) {
  Json j = manifest_identity(m);
  j["created_at"] = m.created_at;
  return j;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

namespace {

std::string basename_of(const std::string& path) { return fs::path(path).filename().string(); }

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("write failed: " + path);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Request accessors. Missing keys fall back to the default; wrong types are
// argument errors naming the key.
template <class T>
T opt(const Json& req, const char* key, T fallback) {
  if (!req.contains(key) || req[key].is_null()) return fallback;
  try {
    return req[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ArgumentError(std::string("request field `") + key + "` has the wrong type");
  }
}

std::string need_string(const Json& req, const char* key) {
  if (!req.contains(key) || !req[key].is_string() || req[key].get<std::string>().empty())
    throw ArgumentError(std::string("missing required option `") + key + "`");
  return req[key].get<std::string>();
}

std::uint64_t seed_of(const Json& req) {
  if (!req.contains("seed") || req["seed"].is_null()) return 0;
  const auto& s = req["seed"];
  if (s.is_number_unsigned()) return s.get<std::uint64_t>();
  if (s.is_number_integer() && s.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(s.get<std::int64_t>());
  if (s.is_string()) {
    const auto text = s.get<std::string>();
    std::size_t used = 0;
    try {
      const auto v = std::stoull(text, &used, 0);
      if (used == text.size() && text.find('-') == std::string::npos) return v;
    } catch (const std::exception&) {
    }
  }
  throw ArgumentError("`seed` must be an unsigned 64-bit integer");
}

unsigned jobs_of(const Json& req) {
  const auto j = opt<std::int64_t>(req, "jobs", 1);
  if (j < 1 || j > 1024) throw ArgumentError("`jobs` must lie in [1, 1024]");
  return static_cast<unsigned>(j);
}

// Writes the sidecar manifest and returns the manifest body for the response.
Json finish(Manifest& m, const std::string& out, const std::vector<std::string>& written) {
  for (const auto& p : written) m.outputs[basename_of(p)] = sha256_file_hex(p);
  m.created_at = utc_now();
  const Json j = manifest_to_json(m);
  write_file(out + ".manifest.json", j.dump(2) + "\n");
  return j;
}

Json reject_json(const corpus::Reject& r) { return Json{{"line", r.line}, {"stage", "parse"}, {"error", r.reason}}; }

std::string first_violation(const ValidationReport& r) {
  return r.front().path + ": " + r.front().message;
}

Json header_line(const Manifest& m, Json extra) {
  Json h;
  h["tool_version"] = tool_version();
  h["master_seed"] = m.master_seed;
  h["config_hash"] = config_hash(m.config);
  for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
  h["counts"] = m.counts;
  return Json{{"manifest", std::move(h)}};
}

// ---- validate --------------------------------------------------------------

CommandResult cmd_validate(const Json& req) {
  const auto path = need_string(req, "corpus");
  const auto parsed = corpus::parse_corpus(path, jobs_of(req));
  const auto report = corpus::validate_corpus(parsed.dialogues);
  Json rejects = Json::array();
  for (const auto& r : parsed.rejects) rejects.push_back(Json{{"line", r.line}, {"reason", r.reason}});
  Json violations = Json::array();
  for (const auto& v : report) violations.push_back(Json{{"path", v.path}, {"message", v.message}});
  const bool ok = parsed.rejects.empty() && report.empty();
  Json body;
  body["corpus"] = basename_of(path);
  body["dialogues"] = parsed.dialogues.size();
  body["valid"] = ok;
  body["rejects"] = std::move(rejects);
  body["violations"] = std::move(violations);
  return {body, !ok};
}

// ---- build-thinker ---------------------------------------------------------

CommandResult cmd_build_thinker(const Json& req) {
  const auto path = need_string(req, "corpus");
  const auto out = need_string(req, "out");
  const auto seed = seed_of(req);
  const auto jobs = jobs_of(req);
  thinker::InterleavePolicy policy;
  policy.p_user_speech = opt<double>(req, "p_user", policy.p_user_speech);
  policy.p_assistant_segment_speech = opt<double>(req, "p_assistant", policy.p_assistant_segment_speech);
  policy.user_draw_per_dialogue = opt<bool>(req, "user_draw_per_dialogue", false);
  thinker::check_policy(policy);

  const auto parsed = corpus::parse_corpus(path, jobs);
  const auto n = parsed.dialogues.size();
  std::vector<std::string> lines(n), errors(n);
  std::vector<std::array<std::int64_t, 3>> tallies(n);  // speech, text, loss targets
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& d = parsed.dialogues[i];
    const auto report = corpus::validate_dialogue(d);
    if (!report.empty()) {
      errors[i] = Json{{"dialogue_id", d.id}, {"line", parsed.lines[i]}, {"stage", "validate"},
                       {"error", first_violation(report)}, {"violations", report.size()}}.dump();
      return;
    }
    try {
      const auto seq = thinker::interleave_dialogue(d, policy, seed);
      for (const auto& e : seq.elements) {
        ++tallies[i][e.modality == thinker::Modality::kSpeech ? 0 : 1];
        if (e.loss_target) ++tallies[i][2];
      }
      lines[i] = thinker::serialize_sequence(seq);
    } catch (const Error& e) {
      errors[i] = Json{{"dialogue_id", d.id}, {"line", parsed.lines[i]}, {"stage", "compile"}, {"error", e.what()}}.dump();
    }
  });

  std::string body, err_body;
  std::int64_t sequences = 0, speech = 0, text = 0, targets = 0;
  for (const auto& r : parsed.rejects) err_body += reject_json(r).dump() + "\n";
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) err_body += errors[i] + "\n";
    if (lines[i].empty()) continue;
    body += lines[i];
    body += '\n';
    ++sequences;
    speech += tallies[i][0];
    text += tallies[i][1];
    targets += tallies[i][2];
  }

  Manifest m;
  m.command = "forge build-thinker";
  m.master_seed = seed;
  m.config = Json{{"command", "build-thinker"}, {"policy", thinker::policy_to_json(policy)}};
  m.inputs[basename_of(path)] = sha256_file_hex(path);
  m.counts = Json{{"input_dialogues", n},
                  {"parse_rejects", parsed.rejects.size()},
                  {"sequences", sequences},
                  {"errors", static_cast<std::int64_t>(n) - sequences + static_cast<std::int64_t>(parsed.rejects.size())},
                  {"speech_elements", speech},
                  {"text_elements", text},
                  {"loss_targets", targets}};
  const auto header = header_line(m, Json{{"policy", thinker::policy_to_json(policy)}}).dump();
  write_file(out, header + "\n" + body);
  write_file(out + ".errors.jsonl", err_body);
  return {finish(m, out, {out, out + ".errors.jsonl"}), false};
}

// ---- build-talker ----------------------------------------------------------

CommandResult cmd_build_talker(const Json& req) {
  const auto path = need_string(req, "corpus");
  const auto out = need_string(req, "out");
  const auto seed = seed_of(req);
  const auto jobs = jobs_of(req);
  const auto mode_name = opt<std::string>(req, "mode", "auto");
  std::optional<talker::Mode> fixed_mode;
  if (mode_name != "auto") {
    fixed_mode = talker::mode_from(mode_name);
    if (!fixed_mode) throw ArgumentError("unknown talker mode `" + mode_name + "`");
  }
  auto ratio = talker::parse_ratio(opt<std::string>(req, "ratio", "5:15"));
  ratio.randomized = opt<bool>(req, "randomized_ratio", false);
  talker::check_ratio(ratio);
  talker::SpecialTokenRegistry registry = talker::default_registry();
  const auto registry_in = opt<std::string>(req, "registry", "");
  if (!registry_in.empty()) {
    std::ifstream f(registry_in);
    if (!f) throw IoError("cannot open " + registry_in);
    try {
      registry = talker::load_registry(Json::parse(f));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(registry_in + ": " + e.what());
    }
  }

  const auto parsed = corpus::parse_corpus(path, jobs);
  const auto n = parsed.dialogues.size();
  std::vector<ValidationReport> reports(n);
  parallel_for(n, jobs, [&](std::size_t i) { reports[i] = corpus::validate_dialogue(parsed.dialogues[i]); });
  std::vector<corpus::Dialogue> valid;
  for (std::size_t i = 0; i < n; ++i)
    if (reports[i].empty()) valid.push_back(parsed.dialogues[i]);
  const talker::CorpusIndex index(valid);

  std::vector<std::string> lines(n), errors(n);
  std::vector<std::int64_t> token_counts(n, 0);
  std::vector<int> modes(n, -1);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& d = parsed.dialogues[i];
    if (!reports[i].empty()) {
      errors[i] = Json{{"dialogue_id", d.id}, {"line", parsed.lines[i]}, {"stage", "validate"},
                       {"error", first_violation(reports[i])}, {"violations", reports[i].size()}}.dump();
      return;
    }
    const auto mode = fixed_mode ? *fixed_mode : talker::mode_for_source(d.source);
    try {
      const auto seq = talker::assemble(d, mode, ratio, index, seed, registry);
      lines[i] = talker::serialize_sequence(seq);
      token_counts[i] = static_cast<std::int64_t>(seq.tokens.size());
      modes[i] = static_cast<int>(mode);
    } catch (const NoReferenceError& e) {
      errors[i] = Json{{"dialogue_id", d.id}, {"line", parsed.lines[i]}, {"stage", "no_reference"}, {"error", e.what()}}.dump();
    } catch (const Error& e) {
      errors[i] = Json{{"dialogue_id", d.id}, {"line", parsed.lines[i]}, {"stage", "compile"}, {"error", e.what()}}.dump();
    }
  });

  std::string body, err_body;
  std::int64_t sequences = 0, tokens = 0, no_ref = 0;
  std::array<std::int64_t, 3> by_mode{};
  for (const auto& r : parsed.rejects) err_body += reject_json(r).dump() + "\n";
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      err_body += errors[i] + "\n";
      if (errors[i].find("\"stage\":\"no_reference\"") != std::string::npos) ++no_ref;
    }
    if (lines[i].empty()) continue;
    body += lines[i];
    body += '\n';
    ++sequences;
    tokens += token_counts[i];
    ++by_mode[static_cast<std::size_t>(modes[i])];
  }

  Manifest m;
  m.command = "forge build-talker";
  m.master_seed = seed;
  Json ratio_json{{"n_text", ratio.n_text}, {"m_speech", ratio.m_speech}, {"randomized", ratio.randomized}};
  m.config = Json{{"command", "build-talker"},
                  {"mode", mode_name},
                  {"ratio", ratio_json},
                  {"registry", talker::registry_to_json(registry)}};
  m.inputs[basename_of(path)] = sha256_file_hex(path);
  if (!registry_in.empty()) m.inputs[basename_of(registry_in)] = sha256_file_hex(registry_in);
  m.counts = Json{{"input_dialogues", n},
                  {"parse_rejects", parsed.rejects.size()},
                  {"sequences", sequences},
                  {"errors", static_cast<std::int64_t>(n) - sequences + static_cast<std::int64_t>(parsed.rejects.size())},
                  {"no_reference", no_ref},
                  {"tokens", tokens},
                  {"dialogue", by_mode[0]},
                  {"long_text", by_mode[1]},
                  {"standard_sentence", by_mode[2]}};
  const auto header =
      header_line(m, Json{{"mode", mode_name}, {"ratio", ratio_json}, {"registry_version", registry.version}}).dump();
  write_file(out, header + "\n" + body);
  write_file(out + ".errors.jsonl", err_body);
  std::vector<std::string> written = {out, out + ".errors.jsonl"};
  const auto registry_out = opt<std::string>(req, "registry_out", "");
  if (!registry_out.empty()) {
    write_file(registry_out, talker::registry_to_json(registry).dump(2) + "\n");
    written.push_back(registry_out);
  }
  return {finish(m, out, written), false};
}

// ---- clean -----------------------------------------------------------------

CommandResult cmd_clean(const Json& req) {
  const auto path = need_string(req, "corpus");
  const auto out = need_string(req, "out");
  const auto seed = seed_of(req);
  const auto jobs = jobs_of(req);
  cleaning::ClientConfig cc;
  if (req.contains("client_config") && req["client_config"].is_object())
    cc = cleaning::load_client_config(req["client_config"]);
  cc.kind = opt<std::string>(req, "client", cc.kind);
  cc.retries = static_cast<int>(opt<std::int64_t>(req, "retries", cc.retries));
  cc.synthesize_backfill = opt<bool>(req, "synthesize_backfill", cc.synthesize_backfill);
  if (cc.retries < 0) throw ArgumentError("`retries` must be >= 0");
  auto clients = cleaning::make_clients(cc);
  cleaning::CleaningOptions co;
  co.retries = cc.retries;
  co.synthesize_backfill = cc.synthesize_backfill;

  const auto parsed = corpus::parse_corpus(path, jobs);
  const unsigned workers = std::max(1u, std::min(jobs, cc.in_flight));
  auto outcomes =
      cleaning::clean_corpus(parsed.dialogues, *clients.corrector, *clients.synth, seed, co, workers);

  // Every emitted dialogue is re-validated; failures join the rejects.
  std::vector<ValidationReport> post(outcomes.size());
  parallel_for(outcomes.size(), jobs, [&](std::size_t i) {
    if (!outcomes[i].deferred && !outcomes[i].rejected) post[i] = corpus::validate_dialogue(outcomes[i].dialogue);
  });

  std::string cleaned, provenance, deferred, rejects;
  std::map<std::string, std::int64_t> by_branch;
  std::int64_t n_ok = 0, n_deferred = 0, n_rejected = 0, n_masked = 0;
  for (const auto& r : parsed.rejects) rejects += reject_json(r).dump() + "\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.deferred && !o.rejected && !post[i].empty()) {
      o.rejected = true;
      o.rejection = post[i];
      o.dialogue = parsed.dialogues[i];
    }
    ++by_branch[std::string(cleaning::to_string(o.branch))];
    provenance += cleaning::outcome_summary_json(o).dump() + "\n";
    if (o.deferred) {
      ++n_deferred;
      deferred += corpus::serialize_dialogue(parsed.dialogues[i]) + "\n";
    } else if (o.rejected) {
      ++n_rejected;
      Json rj{{"line", parsed.lines[i]}, {"dialogue_id", o.dialogue.id}, {"stage", "validate"},
              {"branch", cleaning::to_string(o.branch)}, {"error", first_violation(o.rejection)}};
      Json vs = Json::array();
      for (const auto& v : o.rejection) vs.push_back(Json{{"path", v.path}, {"message", v.message}});
      rj["violations"] = std::move(vs);
      rejects += rj.dump() + "\n";
    } else {
      ++n_ok;
      n_masked += static_cast<std::int64_t>(o.masked_spans.size());
      cleaned += corpus::serialize_dialogue(o.dialogue) + "\n";
    }
  }

  Manifest m;
  m.command = "forge clean";
  m.master_seed = seed;
  // Transport details do not change outputs; only the client kind and the
  // knobs that shape results are hashed.
  m.config = Json{{"command", "clean"},
                  {"client", cc.kind},
                  {"retries", cc.retries},
                  {"synthesize_backfill", cc.synthesize_backfill},
                  {"mock_suffix", cc.mock_suffix}};
  m.inputs[basename_of(path)] = sha256_file_hex(path);
  Json branches = Json::object();
  for (const auto& [k, v] : by_branch) branches[k] = v;
  m.counts = Json{{"input_dialogues", parsed.dialogues.size()},
                  {"parse_rejects", parsed.rejects.size()},
                  {"cleaned", n_ok},
                  {"deferred", n_deferred},
                  {"rejected", n_rejected},
                  {"masked_spans", n_masked},
                  {"branches", std::move(branches)}};
  const std::vector<std::string> written = {out, out + ".provenance.jsonl", out + ".deferred.jsonl",
                                            out + ".rejects.jsonl"};
  write_file(written[0], cleaned);
  write_file(written[1], provenance);
  write_file(written[2], deferred);
  write_file(written[3], rejects);
  return {finish(m, out, written), false};
}

// ---- stats -----------------------------------------------------------------

Json corpus_stats(const std::vector<corpus::Dialogue>& dialogues) {
  std::map<std::string, double> seconds;
  std::map<std::string, std::int64_t> languages, flags, observed;
  for (std::size_t s = 0; s < 5; ++s) {
    const std::string name(corpus::to_string(static_cast<corpus::Source>(s)));
    seconds[name] = 0;
    observed[name] = 0;
  }
  for (std::size_t l = 0; l < 5; ++l) languages[std::string(corpus::to_string(static_cast<corpus::Language>(l)))] = 0;
  for (std::size_t f = 0; f < 4; ++f) flags[std::string(corpus::to_string(static_cast<corpus::FlagKind>(f)))] = 0;
  std::int64_t turns = 0, audio_turns = 0;
  double total_s = 0;
  for (const auto& d : dialogues) {
    const std::string src(corpus::to_string(d.source));
    ++languages[std::string(corpus::to_string(d.language))];
    for (const auto& f : d.quality_flags) ++flags[std::string(corpus::to_string(f.kind))];
    for (const auto& t : d.turns) {
      ++turns;
      if (!t.audio) continue;
      ++audio_turns;
      seconds[src] += t.audio->duration_s;
      observed[src] += static_cast<std::int64_t>(t.audio->token_ids.size());
      total_s += t.audio->duration_s;
    }
  }
  Json classes = Json::object();
  for (const auto& [name, s] : seconds) {
    const double hours = s / 3600.0;
    classes[name] = Json{{"hours", hours}, {"tokens", corpus::tokens_for_hours(hours)}, {"audio_seconds", s},
                         {"observed_tokens", observed[name]}};
  }
  Json j;
  j["dialogues"] = dialogues.size();
  j["turns"] = turns;
  j["audio_turns"] = audio_turns;
  j["audio_seconds"] = total_s;
  j["audio_hours"] = total_s / 3600.0;
  j["tokens"] = corpus::tokens_for_hours(total_s / 3600.0);
  j["token_rate_hz"] = corpus::kTokenRateHz;
  j["classes"] = std::move(classes);
  Json lj = Json::object();
  for (const auto& [k, v] : languages) lj[k] = v;
  j["languages"] = std::move(lj);
  Json fj = Json::object();
  for (const auto& [k, v] : flags) fj[k] = v;
  j["flags"] = std::move(fj);
  return j;
}

CommandResult cmd_stats(const Json& req) {
  const auto path = need_string(req, "corpus");
  const auto parsed = corpus::parse_corpus(path, jobs_of(req));
  Json report = corpus_stats(parsed.dialogues);
  report["parse_rejects"] = parsed.rejects.size();
  const auto out = opt<std::string>(req, "out", "");
  if (!out.empty()) {
    write_file(out, report.dump(2) + "\n");
    Manifest m;
    m.command = "forge stats";
    m.config = Json{{"command", "stats"}};
    m.inputs[basename_of(path)] = sha256_file_hex(path);
    m.counts = Json{{"dialogues", parsed.dialogues.size()}};
    finish(m, out, {out});
  }
  return {report, false};
}

// ---- generate --------------------------------------------------------------

CommandResult cmd_generate(const Json& req) {
  const auto out = need_string(req, "out");
  auto o = synth::options_from_json(req);
  o.seed = seed_of(req);
  synth::check_options(o);
  const auto dialogues = synth::generate(o, jobs_of(req));
  corpus::write_corpus(out, dialogues);
  Manifest m;
  m.command = "forge generate";
  m.master_seed = o.seed;
  Json cfg = synth::options_to_json(o);
  m.config = Json{{"command", "generate"}, {"options", cfg}};
  m.counts = Json{{"dialogues", dialogues.size()}};
  return {finish(m, out, {out}), false};
}

// ---- templates -------------------------------------------------------------

CommandResult cmd_templates_expand(const Json& req) {
  const auto task = need_string(req, "task");
  const auto limit = opt<std::int64_t>(req, "limit", 100);
  if (limit < 1) throw ArgumentError("`limit` must be >= 1");
  templates::Registry reg;
  const auto reg_path = opt<std::string>(req, "registry", "");
  if (reg_path.empty()) {
    reg = templates::default_registry();
  } else {
    std::ifstream f(reg_path);
    if (!f) throw IoError("cannot open " + reg_path);
    try {
      reg = templates::load_registry(Json::parse(f));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(reg_path + ": " + e.what());
    }
  }
  auto it = reg.find(task);
  if (it == reg.end()) throw ArgumentError("unknown task `" + task + "`");
  const auto variants = templates::expand_templates(it->second, static_cast<std::uint64_t>(limit));
  Json vs = Json::array();
  for (const auto& v : variants)
    vs.push_back(Json{{"variant_index", v.variant_index}, {"language", v.language}, {"text", v.text}});
  Json body;
  body["task"] = task;
  body["combinations"] = templates::combination_count(it->second);
  body["variants"] = std::move(vs);
  return {body, false};
}

// ---- plan ------------------------------------------------------------------

schedule::Plan plan_of(const Json& req) {
  const auto path = opt<std::string>(req, "plan", "");
  if (path.empty()) return schedule::build_default_plan();
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return schedule::plan_from_json(Json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

CommandResult cmd_plan_show(const Json& req) { return {schedule::plan_to_json(plan_of(req)), false}; }

CommandResult cmd_plan_directive(const Json& req) {
  const auto plan = plan_of(req);
  const auto stage_name = need_string(req, "stage");
  const auto stage = schedule::stage_from(stage_name);
  if (!stage) throw ArgumentError("unknown stage `" + stage_name + "`");
  if (!req.contains("step")) throw ArgumentError("missing required option `step`");
  const auto step = opt<std::int64_t>(req, "step", 0);
  std::optional<std::int64_t> total;
  if (req.contains("total") && !req["total"].is_null()) total = opt<std::int64_t>(req, "total", 0);
  return {schedule::directive_to_json(schedule::directive_at(plan, *stage, step, total)), false};
}

CommandResult cmd_plan_budget(const Json& req) {
  const auto plan = plan_of(req);
  const auto path = need_string(req, "stats");
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  Json stats;
  try {
    stats = Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const auto report = schedule::budget_check(plan, schedule::stats_from_json(stats));
  return {schedule::budget_report_to_json(report), !report.all_pass()};
}

// ---- loss-check ------------------------------------------------------------

CommandResult cmd_loss_check(const Json& req) {
  const auto cases = opt<std::int64_t>(req, "cases", 100);
  if (cases < 1 || cases > 1'000'000) throw ArgumentError("`cases` must lie in [1, 1000000]");
  const auto r = loss::run_grad_suite(static_cast<int>(cases), seed_of(req));
  Json by_t = Json::object();
  for (std::size_t i = 0; i < r.temperatures.size(); ++i) {
    std::ostringstream key;
    key << r.temperatures[i];
    by_t[key.str()] = r.max_kl_error_by_t[i];
  }
  const bool pass = r.max_ce_error < loss::kGradTolerance && r.max_kl_error < loss::kGradTolerance &&
                    r.max_identical_kl <= 1e-12 && r.max_uniform_ce_deviation <= 1e-12;
  Json body;
  body["cases"] = r.cases;
  body["tolerance"] = loss::kGradTolerance;
  body["max_ce_rel_error"] = r.max_ce_error;
  body["max_kl_rel_error"] = r.max_kl_error;
  body["max_kl_rel_error_by_temperature"] = std::move(by_t);
  body["max_identical_kl"] = r.max_identical_kl;
  body["max_uniform_ce_deviation"] = r.max_uniform_ce_deviation;
  body["numeric_side"] = "long double";
  body["double_valued_reference"] = Json{{"max_ce_rel_error", r.max_ce_error_double},
                                         {"max_kl_rel_error", r.max_kl_error_double}};
  body["pass"] = pass;
  return {body, !pass};
}

// ---- eval ------------------------------------------------------------------

CommandResult cmd_eval_rate(const Json& req, metrics::RateKind kind) {
  const auto refs = read_lines(need_string(req, "ref"));
  const auto hyps = read_lines(need_string(req, "hyp"));
  metrics::NormalizeOptions norm;
  norm.enabled = opt<bool>(req, "normalize", true);
  const auto r = metrics::corpus_rate(kind, refs, hyps, norm, jobs_of(req));
  Json body;
  body["metric"] = kind == metrics::RateKind::kCer ? "cer" : "wer";
  body["normalize"] = norm.enabled;
  body["utterances"] = refs.size();
  body["pooled"] = metrics::edit_ops_to_json(r.pooled);
  body["rate"] = r.rate();
  return {body, false};
}

CommandResult cmd_eval_only_yes(const Json& req) {
  const auto responses = read_lines(need_string(req, "responses"));
  const auto acc = metrics::only_yes_accuracy(responses);
  std::int64_t passes = 0;
  for (const auto& r : responses) passes += metrics::only_yes_pass(r) ? 1 : 0;
  Json body;
  body["metric"] = "only_yes_strict_accuracy";
  body["total"] = responses.size();
  body["passes"] = passes;
  body["accuracy"] = acc;
  return {body, false};
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "validate",   "build-thinker",  "build-talker", "clean",      "stats",    "generate",  "templates-expand",
      "plan-show",  "plan-directive", "plan-budget",  "loss-check", "eval-cer", "eval-wer",  "eval-only-yes"};
  return names;
}

CommandResult run_command(std::string_view name, const Json& request) {
  if (!request.is_object()) throw ArgumentError("request must be a JSON object");
  if (name == "validate") return cmd_validate(request);
  if (name == "build-thinker") return cmd_build_thinker(request);
  if (name == "build-talker") return cmd_build_talker(request);
  if (name == "clean") return cmd_clean(request);
  if (name == "stats") return cmd_stats(request);
  if (name == "generate") return cmd_generate(request);
  if (name == "templates-expand") return cmd_templates_expand(request);
  if (name == "plan-show") return cmd_plan_show(request);
  if (name == "plan-directive") return cmd_plan_directive(request);
  if (name == "plan-budget") return cmd_plan_budget(request);
  if (name == "loss-check") return cmd_loss_check(request);
  if (name == "eval-cer") return cmd_eval_rate(request, metrics::RateKind::kCer);
  if (name == "eval-wer") return cmd_eval_rate(request, metrics::RateKind::kWer);
  if (name == "eval-only-yes") return cmd_eval_only_yes(request);
  throw ArgumentError("unknown command `" + std::string(name) + "`");
}

}  // namespace forge::pipeline
