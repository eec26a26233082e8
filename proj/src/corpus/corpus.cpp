#include "corpus/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "util/error.hpp"
#include "util/parallel.hpp"
#include "util/utf8.hpp"

namespace forge::corpus {

namespace {

template <class E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  return std::nullopt;
}

constexpr std::array<std::string_view, 5> kLanguages = {"zh", "en", "ja", "ko", "other"};
constexpr std::array<std::string_view, 5> kSources = {"real_life", "synthetic", "podcast", "audiobook",
                                                      "short_utterance"};
constexpr std::array<std::string_view, 2> kRoles = {"user", "assistant"};
constexpr std::array<std::string_view, 4> kFlagKinds = {
    "logic_contradiction_correctable", "logic_contradiction_severe", "missing_context", "clean"};

}  // namespace

std::string_view to_string(Language v) { return kLanguages[static_cast<std::size_t>(v)]; }
std::string_view to_string(Source v) { return kSources[static_cast<std::size_t>(v)]; }
std::string_view to_string(Role v) { return kRoles[static_cast<std::size_t>(v)]; }
std::string_view to_string(FlagKind v) { return kFlagKinds[static_cast<std::size_t>(v)]; }
std::optional<Language> language_from(std::string_view s) { return lookup<Language>(kLanguages, s); }
std::optional<Source> source_from(std::string_view s) { return lookup<Source>(kSources, s); }
std::optional<Role> role_from(std::string_view s) { return lookup<Role>(kRoles, s); }
std::optional<FlagKind> flag_kind_from(std::string_view s) { return lookup<FlagKind>(kFlagKinds, s); }

bool Dialogue::has_flag(FlagKind k) const {
  return std::any_of(quality_flags.begin(), quality_flags.end(),
                     [k](const QualityFlag& f) { return f.kind == k; });
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Json range_json(const Range& r) { return Json::array({r.start, r.end}); }

Json audio_json(const AudioTokenSpan& a) {
  Json j;
  j["token_ids"] = a.token_ids;
  j["frame_rate_hz"] = a.frame_rate_hz;
  j["duration_s"] = a.duration_s;
  return j;
}

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw ParseError("field `" + path + "`: " + why);
}

const Json& require(const Json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw ParseError("missing field `" + (path.empty() ? "" : path + ".") + key + "`");
  return obj[key];
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string get_string(const Json& obj, const char* key, const std::string& path) {
  const auto& v = require(obj, key, path);
  if (!v.is_string()) fail(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::int64_t get_int(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

double get_real(const Json& obj, const char* key, const std::string& path) {
  const auto& v = require(obj, key, path);
  if (!v.is_number()) fail(join(path, key), "expected a number");
  return v.get<double>();
}

Range get_range(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected a [start, end] pair");
  return Range{get_int(v[0], path + "[0]"), get_int(v[1], path + "[1]")};
}

template <class E>
E get_enum(const Json& obj, const char* key, const std::string& path,
           std::optional<E> (*from)(std::string_view), const char* allowed) {
  const auto s = get_string(obj, key, path);
  auto v = from(s);
  if (!v) fail(join(path, key), "unknown value \"" + s + "\" (expected one of " + allowed + ")");
  return *v;
}

AudioTokenSpan audio_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  AudioTokenSpan a;
  const auto& ids = require(j, "token_ids", path);
  if (!ids.is_array()) fail(path + ".token_ids", "expected an array");
  a.token_ids.reserve(ids.size());
  for (const auto& t : ids) {
    if (!t.is_number_integer()) fail(path + ".token_ids", "expected integer token ids");
    a.token_ids.push_back(t.get<std::int64_t>());
  }
  a.frame_rate_hz = get_real(j, "frame_rate_hz", path);
  a.duration_s = get_real(j, "duration_s", path);
  return a;
}

Turn turn_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  Turn t;
  t.role = get_enum<Role>(j, "role", path, &role_from, "user|assistant");
  t.speaker_id = get_string(j, "speaker_id", path);
  t.text = get_string(j, "text", path);
  if (j.contains("audio") && !j["audio"].is_null()) t.audio = audio_from_json(j["audio"], path + ".audio");
  if (j.contains("alignment") && !j["alignment"].is_null()) {
    const auto& al = j["alignment"];
    if (!al.is_array()) fail(path + ".alignment", "expected an array");
    for (std::size_t i = 0; i < al.size(); ++i) {
      const std::string p = path + ".alignment[" + std::to_string(i) + "]";
      if (!al[i].is_object()) fail(p, "expected an object");
      AlignmentSpan s;
      s.text_range = get_range(require(al[i], "text_range", p), p + ".text_range");
      s.audio_range = get_range(require(al[i], "audio_range", p), p + ".audio_range");
      s.index = get_int(require(al[i], "index", p), p + ".index");
      t.alignment.push_back(s);
    }
  }
  if (j.contains("caption") && !j["caption"].is_null()) {
    try {
      t.caption = caption::caption_from_json(j["caption"]);
    } catch (const ParseError& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  return t;
}

}  // namespace

Json dialogue_to_json(const Dialogue& d) {
  Json j;
  j["id"] = d.id;
  j["language"] = to_string(d.language);
  j["source"] = to_string(d.source);
  Json flags = Json::array();
  for (const auto& f : d.quality_flags) {
    Json spans = Json::array();
    for (const auto& s : f.spans) spans.push_back(range_json(s));
    Json fj;
    fj["kind"] = to_string(f.kind);
    fj["spans"] = std::move(spans);
    flags.push_back(std::move(fj));
  }
  j["quality_flags"] = std::move(flags);
  Json turns = Json::array();
  for (const auto& t : d.turns) {
    Json tj;
    tj["role"] = to_string(t.role);
    tj["speaker_id"] = t.speaker_id;
    tj["text"] = t.text;
    tj["audio"] = t.audio ? audio_json(*t.audio) : Json(nullptr);
    Json al = Json::array();
    for (const auto& s : t.alignment) {
      Json sj;
      sj["text_range"] = range_json(s.text_range);
      sj["audio_range"] = range_json(s.audio_range);
      sj["index"] = s.index;
      al.push_back(std::move(sj));
    }
    tj["alignment"] = std::move(al);
    tj["caption"] = t.caption ? caption::caption_to_json(*t.caption) : Json(nullptr);
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  return j;
}

Dialogue dialogue_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  Dialogue d;
  d.id = get_string(j, "id", "");
  d.language = get_enum<Language>(j, "language", "", &language_from, "zh|en|ja|ko|other");
  d.source = get_enum<Source>(j, "source", "", &source_from,
                              "real_life|synthetic|podcast|audiobook|short_utterance");
  if (j.contains("quality_flags") && !j["quality_flags"].is_null()) {
    const auto& flags = j["quality_flags"];
    if (!flags.is_array()) fail("quality_flags", "expected an array");
    for (std::size_t i = 0; i < flags.size(); ++i) {
      const std::string p = "quality_flags[" + std::to_string(i) + "]";
      if (!flags[i].is_object()) fail(p, "expected an object");
      QualityFlag f;
      f.kind = get_enum<FlagKind>(flags[i], "kind", p, &flag_kind_from,
                                  "logic_contradiction_correctable|logic_contradiction_severe|"
                                  "missing_context|clean");
      if (flags[i].contains("spans") && !flags[i]["spans"].is_null()) {
        const auto& spans = flags[i]["spans"];
        if (!spans.is_array()) fail(p + ".spans", "expected an array");
        for (std::size_t k = 0; k < spans.size(); ++k)
          f.spans.push_back(get_range(spans[k], p + ".spans[" + std::to_string(k) + "]"));
      }
      d.quality_flags.push_back(std::move(f));
    }
  }
  const auto& turns = require(j, "turns", "");
  if (!turns.is_array()) fail("turns", "expected an array");
  d.turns.reserve(turns.size());
  for (std::size_t i = 0; i < turns.size(); ++i)
    d.turns.push_back(turn_from_json(turns[i], "turns[" + std::to_string(i) + "]"));
  return d;
}

std::string serialize_dialogue(const Dialogue& d) { return dialogue_to_json(d).dump(); }

Dialogue parse_dialogue(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return dialogue_from_json(j);
}

ParsedCorpus parse_corpus_text(std::string_view text, unsigned jobs) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t line_no = 0;
  for (std::size_t pos = 0; pos < text.size();) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line.find_first_not_of(" \t") != std::string_view::npos) lines.emplace_back(line_no, line);
    pos = nl + 1;
  }

  std::vector<std::variant<Dialogue, std::string>> slots(lines.size());
  parallel_for(lines.size(), jobs, [&](std::size_t i) {
    try {
      slots[i] = parse_dialogue(lines[i].second);
    } catch (const ParseError& e) {
      slots[i] = std::string(e.what());
    }
  });

  ParsedCorpus out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (auto* d = std::get_if<Dialogue>(&slots[i])) {
      out.dialogues.push_back(std::move(*d));
      out.lines.push_back(lines[i].first);
    } else {
      out.rejects.push_back({lines[i].first, std::get<std::string>(slots[i])});
    }
  }
  return out;
}

ParsedCorpus parse_corpus(const std::string& path, unsigned jobs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus_text(buf.str(), jobs);
}

std::string serialize_corpus(const std::vector<Dialogue>& dialogues) {
  std::string out;
  for (const auto& d : dialogues) {
    out += serialize_dialogue(d);
    out.push_back('\n');
  }
  return out;
}

void write_corpus(const std::string& path, const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << serialize_corpus(dialogues);
}

// ---------------------------------------------------------------------------
// Arithmetic

std::int64_t downsample_frames(std::int64_t n_frames) {
  if (n_frames < 0) throw ArgumentError("downsample_frames: negative frame count " + std::to_string(n_frames));
  return (n_frames + 1) / 2;
}

std::int64_t tokens_for_hours(double hours, double rate_hz) {
  if (!(hours >= 0.0) || !std::isfinite(hours))
    throw ArgumentError("tokens_for_hours: hours must be finite and >= 0");
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz))
    throw ArgumentError("tokens_for_hours: rate must be finite and > 0");
  return std::llround(hours * 3600.0 * rate_hz);
}

std::int64_t expected_token_count(double duration_s, double rate_hz) {
  return std::llround(duration_s * rate_hz);
}

// ---------------------------------------------------------------------------
// Validation

std::vector<std::int64_t> global_text_offsets(const Dialogue& d) {
  std::vector<std::int64_t> out;
  out.reserve(d.turns.size() + 1);
  std::int64_t acc = 0;
  for (const auto& t : d.turns) {
    out.push_back(acc);
    acc += static_cast<std::int64_t>(utf8::length(t.text));
  }
  out.push_back(acc);
  return out;
}

std::vector<TurnSpan> project_to_turns(const Dialogue& d, const std::vector<Range>& global) {
  const auto offsets = global_text_offsets(d);
  std::vector<TurnSpan> out;
  for (const auto& g : global) {
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const std::int64_t lo = std::max(g.start, offsets[t]);
      const std::int64_t hi = std::min(g.end, offsets[t + 1]);
      if (lo < hi) out.push_back({t, Range{lo - offsets[t], hi - offsets[t]}});
    }
  }
  return out;
}

std::vector<TurnSpan> severe_spans(const Dialogue& d) {
  std::vector<Range> global;
  for (const auto& f : d.quality_flags)
    if (f.kind == FlagKind::kLogicContradictionSevere) global.insert(global.end(), f.spans.begin(), f.spans.end());
  return project_to_turns(d, global);
}

namespace {

std::string range_str(const Range& r) {
  return "[" + std::to_string(r.start) + "," + std::to_string(r.end) + ")";
}

void validate_turn(const Turn& t, std::size_t ti, ValidationReport& r) {
  const std::string tp = "turns[" + std::to_string(ti) + "]";
  if (t.speaker_id.empty()) r.push_back({tp + ".speaker_id", "speaker_id is empty"});
  std::int64_t text_len = 0;
  if (!utf8::valid(t.text)) {
    r.push_back({tp + ".text", "text is not valid UTF-8"});
  } else {
    text_len = static_cast<std::int64_t>(utf8::length(t.text));
  }

  std::optional<std::int64_t> n_tokens;
  if (t.audio) {
    const auto& a = *t.audio;
    const std::string ap = tp + ".audio";
    n_tokens = static_cast<std::int64_t>(a.token_ids.size());
    for (std::size_t k = 0; k < a.token_ids.size(); ++k) {
      if (a.token_ids[k] < 0) {
        r.push_back({ap + ".token_ids[" + std::to_string(k) + "]", "token id is negative"});
        break;
      }
    }
    const bool rate_ok = std::isfinite(a.frame_rate_hz) && a.frame_rate_hz > 0.0;
    const bool dur_ok = std::isfinite(a.duration_s) && a.duration_s >= 0.0;
    if (!rate_ok) r.push_back({ap + ".frame_rate_hz", "frame rate must be > 0"});
    if (!dur_ok) r.push_back({ap + ".duration_s", "duration must be >= 0"});
    if (rate_ok && dur_ok) {
      const auto want = expected_token_count(a.duration_s, a.frame_rate_hz);
      if (std::llabs(*n_tokens - want) > 1)
        r.push_back({ap, std::to_string(*n_tokens) + " tokens but duration implies " + std::to_string(want) +
                             " (tolerance 1)"});
    }
  }

  if (t.alignment.empty()) return;
  std::int64_t expect_text = 0;
  std::int64_t prev_audio_end = 0;
  for (std::size_t k = 0; k < t.alignment.size(); ++k) {
    const auto& s = t.alignment[k];
    const std::string sp = tp + ".alignment[" + std::to_string(k) + "]";
    if (s.index != static_cast<std::int64_t>(k))
      r.push_back({sp + ".index", "index " + std::to_string(s.index) + " != position " + std::to_string(k)});
    if (s.text_range.empty()) r.push_back({sp + ".text_range", "text range " + range_str(s.text_range) + " is empty"});
    if (s.text_range.start < expect_text) {
      r.push_back({sp + ".text_range", "text range " + range_str(s.text_range) + " overlaps alignment[" +
                                           std::to_string(k - 1) + "]"});
    } else if (s.text_range.start > expect_text) {
      r.push_back({sp + ".text_range", "gap before text range " + range_str(s.text_range)});
    }
    expect_text = std::max(expect_text, s.text_range.end);
    if (s.audio_range.start > s.audio_range.end || s.audio_range.start < 0)
      r.push_back({sp + ".audio_range", "audio range " + range_str(s.audio_range) + " is malformed"});
    if (k > 0 && s.audio_range.start < prev_audio_end)
      r.push_back({sp + ".audio_range", "audio range " + range_str(s.audio_range) + " overlaps alignment[" +
                                            std::to_string(k - 1) + "]"});
    prev_audio_end = std::max(prev_audio_end, s.audio_range.end);
    if (n_tokens && s.audio_range.end > *n_tokens)
      r.push_back({sp + ".audio_range", "audio range " + range_str(s.audio_range) + " exceeds " +
                                            std::to_string(*n_tokens) + " audio tokens"});
  }
  if (t.alignment.back().text_range.end != text_len)
    r.push_back({tp + ".alignment", "alignment covers " + std::to_string(t.alignment.back().text_range.end) +
                                        " of " + std::to_string(text_len) + " characters"});
}

}  // namespace

ValidationReport validate_dialogue(const Dialogue& d) {
  ValidationReport r;
  if (d.id.empty()) r.push_back({"id", "id is empty"});
  if (d.turns.empty()) r.push_back({"turns", "dialogue has no turns"});
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Role want = i % 2 == 0 ? Role::kUser : Role::kAssistant;
    if (d.turns[i].role != want)
      r.push_back({"turns[" + std::to_string(i) + "].role",
                   "role alternation violated: expected " + std::string(to_string(want)) + ", found " +
                       std::string(to_string(d.turns[i].role))});
  }

  const auto offsets = global_text_offsets(d);
  const std::int64_t total = offsets.back();
  const bool has_clean = d.has_flag(FlagKind::kClean);
  for (std::size_t i = 0; i < d.quality_flags.size(); ++i) {
    const auto& f = d.quality_flags[i];
    const std::string fp = "quality_flags[" + std::to_string(i) + "]";
    if (f.kind == FlagKind::kLogicContradictionSevere && f.spans.empty())
      r.push_back({fp + ".spans", "severe contradiction flag carries no spans"});
    if (f.kind == FlagKind::kClean && !f.spans.empty())
      r.push_back({fp + ".spans", "clean flag must not carry spans"});
    if (f.kind != FlagKind::kClean && has_clean)
      r.push_back({fp + ".kind", "flag co-occurs with a clean flag"});
    for (std::size_t k = 0; k < f.spans.size(); ++k) {
      const auto& s = f.spans[k];
      if (s.empty() || s.start < 0 || s.end > total)
        r.push_back({fp + ".spans[" + std::to_string(k) + "]",
                     "span " + range_str(s) + " is empty or outside [0," + std::to_string(total) + ")"});
    }
  }

  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    validate_turn(d.turns[i], i, r);
    if (d.turns[i].caption) {
      for (auto v : caption::validate_caption(*d.turns[i].caption))
        r.push_back({"turns[" + std::to_string(i) + "].caption." + v.path, v.message});
    }
  }
  return r;
}

ValidationReport validate_corpus(const std::vector<Dialogue>& dialogues) {
  ValidationReport r;
  std::map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    const std::string prefix = "dialogues[" + std::to_string(i) + "]";
    for (auto& v : validate_dialogue(dialogues[i])) r.push_back({prefix + "." + v.path, v.message});
    auto [it, inserted] = first_seen.emplace(dialogues[i].id, i);
    if (!inserted)
      r.push_back({prefix + ".id", "duplicate id \"" + dialogues[i].id + "\" (first at dialogues[" +
                                       std::to_string(it->second) + "])"});
  }
  return r;
}

}  // namespace forge::corpus
