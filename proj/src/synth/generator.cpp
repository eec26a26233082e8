#include "synth/generator.hpp"

#include <array>
#include <cstdio>

#include "caption/caption.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/parallel.hpp"
#include "util/rng.hpp"
#include "util/utf8.hpp"

namespace forge::synth {

using corpus::AlignmentSpan;
using corpus::AudioTokenSpan;
using corpus::Dialogue;
using corpus::FlagKind;
using corpus::QualityFlag;
using corpus::Range;
using corpus::Role;
using corpus::Turn;

namespace {

constexpr std::array<const char*, 40> kEnWords = {
    "the",    "weather", "is",     "nice",  "today", "we",     "could",   "walk",    "to",     "park",
    "please", "tell",    "me",     "about", "your",  "plans",  "i",       "think",   "that",   "sounds",
    "good",   "music",   "train",  "late",  "again", "coffee", "morning", "meeting", "moved",  "friday",
    "maybe",  "call",    "mother", "soon",  "book",  "tickets", "online", "really",  "quiet",  "house"};

constexpr std::array<const char*, 32> kZhChars = {"今", "天", "气", "很", "好", "我", "们", "去", "公", "园",
                                                  "走", "走", "请", "告", "诉", "你", "的", "计", "划", "听",
                                                  "起", "来", "不", "错", "音", "乐", "火", "车", "晚", "点",
                                                  "咖", "啡"};

std::string en_sentence(Rng& rng) {
  const auto words = rng.between(3, 8);
  std::string s;
  for (std::int64_t w = 0; w < words; ++w) {
    if (w) s += ' ';
    std::string word = kEnWords[rng.below(kEnWords.size())];
    if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
    s += word;
  }
  s += rng.bernoulli(0.2) ? "?" : ".";
  return s;
}

std::string zh_sentence(Rng& rng) {
  const auto chars = rng.between(4, 12);
  std::string s;
  for (std::int64_t c = 0; c < chars; ++c) s += kZhChars[rng.below(kZhChars.size())];
  s += rng.bernoulli(0.2) ? "？" : "。";
  return s;
}

std::optional<caption::Tag> pick(Rng& rng, caption::Attribute a, double p) {
  if (!rng.bernoulli(p)) return std::nullopt;
  const auto& v = caption::default_taxonomy().vocabulary(a).tags;
  return caption::Tag::of(v[rng.below(v.size())]);
}

caption::CaptionRecord random_caption(Rng& rng) {
  caption::CaptionRecord c;
  for (auto a : caption::kAllAttributes) {
    if (caption::is_multi_valued(a)) {
      const auto& v = caption::default_taxonomy().vocabulary(a).tags;
      const auto n = rng.bernoulli(0.3) ? rng.between(1, 2) : 0;
      std::vector<std::size_t> used;
      for (std::int64_t k = 0; k < n; ++k) {
        const auto idx = rng.below(v.size());
        if (std::find(used.begin(), used.end(), idx) != used.end()) continue;
        used.push_back(idx);
        c.add(a, caption::Tag::of(v[idx]));
      }
    } else if (auto t = pick(rng, a, a == caption::Attribute::kEmotion ? 0.9 : 0.6)) {
      c.add(a, *t);
    }
  }
  return c;
}

Turn make_turn(Rng& rng, const GeneratorOptions& o, Role role, std::string speaker, bool zh) {
  Turn t;
  t.role = role;
  t.speaker_id = std::move(speaker);
  const auto segments = rng.between(o.min_segments, o.max_segments);
  const bool with_audio = rng.bernoulli(o.p_audio);
  AudioTokenSpan audio;
  std::int64_t chars = 0;
  std::int64_t tokens = 0;
  for (std::int64_t s = 0; s < segments; ++s) {
    std::string sentence = zh ? zh_sentence(rng) : en_sentence(rng);
    if (!zh && s + 1 < segments) sentence += ' ';
    const auto len = static_cast<std::int64_t>(utf8::length(sentence));
    // Roughly one token per two characters, never fewer than two.
    const auto n_tok = std::max<std::int64_t>(2, len / 2 + rng.between(0, 2));
    AlignmentSpan span;
    span.text_range = {chars, chars + len};
    span.audio_range = with_audio ? Range{tokens, tokens + n_tok} : Range{0, 0};
    span.index = s;
    t.alignment.push_back(span);
    if (with_audio)
      for (std::int64_t k = 0; k < n_tok; ++k) audio.token_ids.push_back(static_cast<std::int64_t>(rng.below(4096)));
    t.text += sentence;
    chars += len;
    tokens += n_tok;
  }
  if (with_audio) {
    audio.duration_s = static_cast<double>(audio.token_ids.size()) / corpus::kTokenRateHz;
    t.audio = std::move(audio);
    if (rng.bernoulli(o.p_caption)) {
      auto c = random_caption(rng);
      if (!c.empty()) t.caption = std::move(c);
    }
  }
  return t;
}

std::string speaker_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%04zu", k);
  return buf;
}

// A random sub-range of one assistant turn, in dialogue-global offsets.
std::optional<Range> assistant_span(Rng& rng, const Dialogue& d) {
  const auto offsets = corpus::global_text_offsets(d);
  std::vector<std::size_t> assistants;
  for (std::size_t i = 0; i < d.turns.size(); ++i)
    if (d.turns[i].role == Role::kAssistant) assistants.push_back(i);
  if (assistants.empty()) return std::nullopt;
  const auto ti = assistants[rng.below(assistants.size())];
  const auto len = offsets[ti + 1] - offsets[ti];
  if (len < 1) return std::nullopt;
  const auto a = rng.between(0, len - 1);
  const auto b = rng.between(a + 1, len);
  return Range{offsets[ti] + a, offsets[ti] + b};
}

}  // namespace

void check_options(const GeneratorOptions& o) {
  if (o.min_turns < 1 || o.max_turns < o.min_turns) throw ArgumentError("generate: need 1 <= min_turns <= max_turns");
  if (o.min_segments < 1 || o.max_segments < o.min_segments)
    throw ArgumentError("generate: need 1 <= min_segments <= max_segments");
  for (double p : {o.p_audio, o.p_caption, o.p_zh, o.p_correctable, o.p_severe, o.p_missing_context})
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("generate: probabilities must lie in [0, 1]");
  if (o.p_correctable + o.p_severe + o.p_missing_context > 1.0 + 1e-12)
    throw ArgumentError("generate: flag probabilities sum to more than 1");
  if (o.source < -1 || o.source > 4) throw ArgumentError("generate: source index out of range");
}

GeneratorOptions options_from_json(const Json& j, GeneratorOptions o) {
  if (!j.is_object()) throw ParseError("generator options must be an object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  try {
    get("count", o.count);
    get("min_turns", o.min_turns);
    get("max_turns", o.max_turns);
    get("min_segments", o.min_segments);
    get("max_segments", o.max_segments);
    get("speakers", o.speakers);
    get("p_audio", o.p_audio);
    get("p_caption", o.p_caption);
    get("p_zh", o.p_zh);
    get("p_correctable", o.p_correctable);
    get("p_severe", o.p_severe);
    get("p_missing_context", o.p_missing_context);
    get("assistant_initial_fragments", o.assistant_initial_fragments);
    if (j.contains("source") && !j["source"].is_null()) {
      auto s = corpus::source_from(j["source"].get<std::string>());
      if (!s) throw ParseError("generator: unknown source " + j["source"].dump());
      o.source = static_cast<int>(*s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("generator options: ") + e.what());
  }
  return o;
}

Json options_to_json(const GeneratorOptions& o) {
  Json j;
  j["count"] = o.count;
  j["min_turns"] = o.min_turns;
  j["max_turns"] = o.max_turns;
  j["min_segments"] = o.min_segments;
  j["max_segments"] = o.max_segments;
  j["speakers"] = o.speakers;
  j["p_audio"] = o.p_audio;
  j["p_caption"] = o.p_caption;
  j["p_zh"] = o.p_zh;
  j["p_correctable"] = o.p_correctable;
  j["p_severe"] = o.p_severe;
  j["p_missing_context"] = o.p_missing_context;
  j["assistant_initial_fragments"] = o.assistant_initial_fragments;
  j["source"] = o.source < 0 ? Json(nullptr) : Json(corpus::to_string(static_cast<corpus::Source>(o.source)));
  return j;
}

Dialogue generate_dialogue(const GeneratorOptions& o, std::size_t i) {
  char id[32];
  std::snprintf(id, sizeof id, "syn-%06zu", i);
  Rng rng(derive_seed(o.seed, id, "generate"));
  Dialogue d;
  d.id = id;
  const bool zh = rng.bernoulli(o.p_zh);
  d.language = zh ? corpus::Language::kZh : corpus::Language::kEn;
  d.source = o.source >= 0 ? static_cast<corpus::Source>(o.source) : static_cast<corpus::Source>(rng.below(5));

  const std::size_t pool = o.speakers ? o.speakers : std::max<std::size_t>(4, o.count / 8);
  const auto user_spk = rng.below(pool);
  auto asst_spk = rng.below(pool);
  if (pool > 1 && asst_spk == user_spk) asst_spk = (asst_spk + 1) % pool;
  const bool single_speaker = d.source == corpus::Source::kAudiobook;

  const double r = rng.uniform();
  FlagKind kind = FlagKind::kClean;
  if (r < o.p_correctable)
    kind = FlagKind::kLogicContradictionCorrectable;
  else if (r < o.p_correctable + o.p_severe)
    kind = FlagKind::kLogicContradictionSevere;
  else if (r < o.p_correctable + o.p_severe + o.p_missing_context)
    kind = FlagKind::kMissingContext;

  auto turns = rng.between(o.min_turns, o.max_turns);
  const bool fragment = kind == FlagKind::kMissingContext && o.assistant_initial_fragments;
  if (fragment) turns = std::max<std::int64_t>(turns, 2);
  for (std::int64_t t = 0; t < turns; ++t) {
    const Role role = t % 2 == 0 ? Role::kUser : Role::kAssistant;
    const auto spk = single_speaker ? user_spk : (role == Role::kUser ? user_spk : asst_spk);
    d.turns.push_back(make_turn(rng, o, role, speaker_name(spk), zh));
  }
  if (fragment) d.turns.erase(d.turns.begin());

  QualityFlag flag{kind, {}};
  if (kind == FlagKind::kLogicContradictionSevere) {
    if (auto s = assistant_span(rng, d)) {
      flag.spans.push_back(*s);
      if (rng.bernoulli(0.3))
        if (auto s2 = assistant_span(rng, d); s2 && !s2->overlaps(*s)) flag.spans.push_back(*s2);
      std::sort(flag.spans.begin(), flag.spans.end(), [](const Range& a, const Range& b) { return a.start < b.start; });
    } else {
      flag.kind = FlagKind::kClean;
    }
  } else if (kind == FlagKind::kLogicContradictionCorrectable && rng.bernoulli(0.5)) {
    if (auto s = assistant_span(rng, d)) flag.spans.push_back(*s);
  }
  d.quality_flags.push_back(std::move(flag));
  return d;
}

std::vector<Dialogue> generate(const GeneratorOptions& o, unsigned jobs) {
  check_options(o);
  std::vector<Dialogue> out(o.count);
  parallel_for(o.count, jobs, [&](std::size_t i) { out[i] = generate_dialogue(o, i); });
  return out;
}

}  // namespace forge::synth
