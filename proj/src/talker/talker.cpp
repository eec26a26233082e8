#include "talker/talker.hpp"

#include <algorithm>
#include <set>

#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/rng.hpp"
#include "util/utf8.hpp"

namespace forge::talker {

using corpus::Role;

namespace {
constexpr std::array<std::string_view, kSpecialTokenCount> kSpecialNames = {
    "REF_START", "REF_END", "ROLE_USER", "ROLE_ASSISTANT", "TEXT_SHIFT", "SPEECH_SHIFT", "EOS"};
constexpr std::array<std::string_view, 3> kModeNames = {"dialogue", "long_text", "standard_sentence"};
}  // namespace

std::string_view to_string(SpecialToken t) { return kSpecialNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(Mode m) { return kModeNames[static_cast<std::size_t>(m)]; }

std::optional<Mode> mode_from(std::string_view s) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i)
    if (kModeNames[i] == s) return static_cast<Mode>(i);
  return std::nullopt;
}

Mode mode_for_source(corpus::Source s) {
  switch (s) {
    case corpus::Source::kRealLife:
    case corpus::Source::kPodcast:
      return Mode::kDialogue;
    case corpus::Source::kAudiobook:
      return Mode::kLongText;
    default:
      return Mode::kStandardSentence;
  }
}

std::optional<SpecialToken> SpecialTokenRegistry::lookup(std::int64_t id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<SpecialToken>(i);
  return std::nullopt;
}

const SpecialTokenRegistry& default_registry() {
  static const SpecialTokenRegistry r = [] {
    SpecialTokenRegistry reg;
    for (std::size_t i = 0; i < kSpecialTokenCount; ++i) reg.ids[i] = kSpecialBase + static_cast<std::int64_t>(i);
    return reg;
  }();
  return r;
}

Json registry_to_json(const SpecialTokenRegistry& r) {
  Json tokens;
  for (std::size_t i = 0; i < kSpecialTokenCount; ++i) tokens[std::string(kSpecialNames[i])] = r.ids[i];
  Json j;
  j["version"] = r.version;
  j["text_id_limit"] = kTextIdLimit;
  j["speech_id_limit"] = kSpecialBase;
  j["tokens"] = std::move(tokens);
  return j;
}

SpecialTokenRegistry load_registry(const Json& j) {
  SpecialTokenRegistry r;
  if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_object())
    throw ParseError("special-token registry: expected an object with `tokens`");
  r.version = j.value("version", std::string());
  std::set<std::int64_t> seen;
  for (std::size_t i = 0; i < kSpecialTokenCount; ++i) {
    const std::string name(kSpecialNames[i]);
    if (!j["tokens"].contains(name) || !j["tokens"][name].is_number_integer())
      throw ParseError("special-token registry: missing integer id for " + name);
    const auto id = j["tokens"][name].get<std::int64_t>();
    if (id < kSpecialBase) throw ParseError("special-token registry: " + name + " id collides with text/speech ids");
    if (!seen.insert(id).second) throw ParseError("special-token registry: duplicate id for " + name);
    r.ids[i] = id;
  }
  return r;
}

void check_ratio(const StreamRatio& r) {
  if (r.n_text < 1 || r.m_speech < 1) throw ArgumentError("stream ratio terms must be >= 1");
}

StreamRatio parse_ratio(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw ArgumentError("ratio must look like N:M");
  StreamRatio r;
  try {
    r.n_text = std::stoll(std::string(s.substr(0, colon)));
    r.m_speech = std::stoll(std::string(s.substr(colon + 1)));
  } catch (const std::exception&) {
    throw ArgumentError("ratio must look like N:M, got \"" + std::string(s) + "\"");
  }
  check_ratio(r);
  return r;
}

CorpusIndex::CorpusIndex(const std::vector<corpus::Dialogue>& dialogues) {
  for (const auto& d : dialogues) {
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const auto& turn = d.turns[t];
      if (!turn.audio || turn.audio->token_ids.empty()) continue;
      SegmentRef ref{d.id, t};
      by_speaker_[turn.speaker_id].push_back(ref);
      audio_.emplace(std::move(ref), *turn.audio);
    }
  }
  for (auto& [speaker, refs] : by_speaker_) std::sort(refs.begin(), refs.end());
}

const std::vector<SegmentRef>& CorpusIndex::segments(const std::string& speaker_id) const {
  static const std::vector<SegmentRef> kNone;
  auto it = by_speaker_.find(speaker_id);
  return it == by_speaker_.end() ? kNone : it->second;
}

const corpus::AudioTokenSpan& CorpusIndex::audio(const SegmentRef& ref) const {
  auto it = audio_.find(ref);
  if (it == audio_.end()) throw ArgumentError("corpus index has no segment " + ref.dialogue_id);
  return it->second;
}

Reference select_reference(const std::string& speaker_id, const CorpusIndex& index,
                           const std::string& current_sample_id, std::uint64_t seed) {
  std::vector<const SegmentRef*> candidates;
  for (const auto& ref : index.segments(speaker_id))
    if (ref.dialogue_id != current_sample_id) candidates.push_back(&ref);
  if (candidates.empty())
    throw NoReferenceError("no_reference: speaker \"" + speaker_id + "\" has no segment outside sample \"" +
                           current_sample_id + "\"");
  Rng rng(seed);
  const auto& pick = *candidates[rng.below(candidates.size())];
  return {pick, index.audio(pick)};
}

std::vector<Token> stream_interleave(const std::vector<std::int64_t>& text_ids,
                                     const std::vector<std::int64_t>& speech_ids, const StreamRatio& ratio) {
  check_ratio(ratio);
  std::vector<Token> out;
  out.reserve(text_ids.size() + speech_ids.size());
  std::size_t ti = 0, si = 0;
  const auto n = static_cast<std::size_t>(ratio.n_text);
  const auto m = static_cast<std::size_t>(ratio.m_speech);
  while (ti < text_ids.size() || si < speech_ids.size()) {
    for (std::size_t k = 0; k < n && ti < text_ids.size(); ++k) out.push_back({Stream::kText, text_ids[ti++]});
    if (ti == text_ids.size()) {
      while (si < speech_ids.size()) out.push_back({Stream::kSpeech, speech_ids[si++]});
      break;
    }
    for (std::size_t k = 0; k < m && si < speech_ids.size(); ++k) out.push_back({Stream::kSpeech, speech_ids[si++]});
    if (si == speech_ids.size()) {
      while (ti < text_ids.size()) out.push_back({Stream::kText, text_ids[ti++]});
      break;
    }
  }
  return out;
}

std::vector<std::int64_t> text_token_ids(const std::string& text) {
  std::vector<std::int64_t> ids;
  for (char32_t cp : utf8::decode(text)) ids.push_back(static_cast<std::int64_t>(cp));
  return ids;
}

namespace {

void check_speech_ids(const std::vector<std::int64_t>& ids, const std::string& where) {
  for (auto id : ids)
    if (id < 0 || id >= kSpecialBase)
      throw CompileError(where + ": speech token id " + std::to_string(id) + " outside [0, " +
                         std::to_string(kSpecialBase) + ")");
}

std::size_t distinct_speakers(const corpus::Dialogue& d) {
  std::set<std::string> s;
  for (const auto& t : d.turns) s.insert(t.speaker_id);
  return s.size();
}

}  // namespace

TalkerSequence assemble(const corpus::Dialogue& d, Mode mode, const StreamRatio& ratio, const CorpusIndex& index,
                        std::uint64_t master_seed, const SpecialTokenRegistry& registry) {
  check_ratio(ratio);
  const std::string where = "sample " + d.id + " (" + std::string(to_string(mode)) + " mode)";
  if (d.turns.empty()) throw CompileError(where + ": dialogue has no turns");

  struct Plan {
    std::size_t turn;
    SpecialToken role;
  };
  std::vector<Plan> plan;
  std::string target_speaker;
  switch (mode) {
    case Mode::kDialogue: {
      if (distinct_speakers(d) < 2) throw CompileError(where + ": dialogue mode needs at least two speakers");
      for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Role want = i % 2 == 0 ? Role::kUser : Role::kAssistant;
        if (d.turns[i].role != want) throw CompileError(where + ": turn roles must alternate starting with user");
        plan.push_back({i, want == Role::kUser ? SpecialToken::kRoleUser : SpecialToken::kRoleAssistant});
      }
      if (d.turns.size() < 2) throw CompileError(where + ": dialogue mode needs an assistant turn");
      target_speaker = d.turns[1].speaker_id;
      break;
    }
    case Mode::kLongText:
      if (distinct_speakers(d) != 1) throw CompileError(where + ": long-text mode needs a single speaker");
      for (std::size_t i = 0; i < d.turns.size(); ++i) plan.push_back({i, SpecialToken::kRoleAssistant});
      target_speaker = d.turns.front().speaker_id;
      break;
    case Mode::kStandardSentence: {
      const std::size_t last = d.turns.size() - 1;
      if (!d.turns[last].audio) throw CompileError(where + ": the utterance has no audio");
      plan.push_back({last, SpecialToken::kRoleAssistant});
      target_speaker = d.turns[last].speaker_id;
      break;
    }
  }

  TalkerSequence seq;
  seq.sample_id = d.id;
  seq.mode = mode;
  seq.record_seed = derive_seed(master_seed, d.id, "talker");
  Rng rng(seq.record_seed);

  auto ref = select_reference(target_speaker, index, d.id, rng.next());
  check_speech_ids(ref.audio.token_ids, where + " reference");
  seq.reference = ref.segment;

  auto push = [&](Token t, bool loss) {
    seq.tokens.push_back(t);
    seq.speech_loss_mask.push_back(loss);
  };
  auto special = [&](SpecialToken t) { push({Stream::kSpecial, registry.id(t)}, false); };

  special(SpecialToken::kRefStart);
  for (auto id : ref.audio.token_ids) push({Stream::kSpeech, id}, false);
  special(SpecialToken::kRefEnd);

  for (const auto& step : plan) {
    const auto& turn = d.turns[step.turn];
    const auto text = text_token_ids(turn.text);
    static const std::vector<std::int64_t> kNoSpeech;
    const auto& speech = turn.audio ? turn.audio->token_ids : kNoSpeech;
    check_speech_ids(speech, where + " turn " + std::to_string(step.turn));
    StreamRatio block_ratio = ratio;
    if (ratio.randomized) {
      block_ratio.n_text = rng.between(1, ratio.n_text);
      block_ratio.m_speech = rng.between(1, ratio.m_speech);
    }
    special(step.role);
    const bool target = step.role == SpecialToken::kRoleAssistant;
    for (const auto& tok : stream_interleave(text, speech, block_ratio))
      push(tok, target && tok.stream == Stream::kSpeech);
  }
  special(SpecialToken::kEos);
  return seq;
}

ParsedSequence parse_sequence(const std::vector<Token>& tokens, const SpecialTokenRegistry& registry) {
  ParsedSequence out;
  auto special_at = [&](std::size_t i) -> std::optional<SpecialToken> {
    if (tokens[i].stream != Stream::kSpecial) return std::nullopt;
    auto s = registry.lookup(tokens[i].id);
    if (!s) throw GrammarError(i, "unregistered special id " + std::to_string(tokens[i].id));
    return s;
  };

  std::size_t i = 0;
  if (tokens.empty() || special_at(0) != SpecialToken::kRefStart) throw GrammarError(0, "expected REF_START");
  ++i;
  for (;; ++i) {
    if (i == tokens.size()) throw GrammarError(i, "expected REF_END before end of sequence");
    if (auto s = special_at(i)) {
      if (*s != SpecialToken::kRefEnd) throw GrammarError(i, "expected REF_END, found " + std::string(to_string(*s)));
      ++i;
      break;
    }
    if (tokens[i].stream != Stream::kSpeech) throw GrammarError(i, "reference may only contain speech tokens");
    out.reference.push_back(tokens[i].id);
  }

  for (;;) {
    if (i == tokens.size()) throw GrammarError(i, "expected a role token or EOS");
    const auto s = special_at(i);
    if (!s) throw GrammarError(i, "expected a role token");
    if (*s == SpecialToken::kEos) {
      if (out.blocks.empty()) throw GrammarError(i, "EOS before any role block");
      if (i + 1 != tokens.size()) throw GrammarError(i + 1, "tokens after EOS");
      return out;
    }
    if (*s != SpecialToken::kRoleUser && *s != SpecialToken::kRoleAssistant)
      throw GrammarError(i, "expected a role token, found " + std::string(to_string(*s)));
    Block b;
    b.role = *s;
    for (++i; i < tokens.size() && tokens[i].stream != Stream::kSpecial; ++i)
      (tokens[i].stream == Stream::kText ? b.text_ids : b.speech_ids).push_back(tokens[i].id);
    out.blocks.push_back(std::move(b));
  }
}

Json sequence_to_json(const TalkerSequence& s) {
  std::string streams;
  std::string mask;
  std::vector<std::int64_t> ids;
  streams.reserve(s.tokens.size());
  ids.reserve(s.tokens.size());
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const auto& t = s.tokens[i];
    streams.push_back(t.stream == Stream::kSpecial ? 'X' : t.stream == Stream::kText ? 'T' : 'S');
    ids.push_back(t.id);
    mask.push_back(s.speech_loss_mask[i] ? '1' : '0');
  }
  Json j;
  j["sample_id"] = s.sample_id;
  j["mode"] = to_string(s.mode);
  j["record_seed"] = s.record_seed;
  j["reference"] = Json{{"dialogue_id", s.reference.dialogue_id}, {"turn", s.reference.turn}};
  j["streams"] = std::move(streams);
  j["ids"] = std::move(ids);
  j["speech_loss_mask"] = std::move(mask);
  return j;
}

std::string serialize_sequence(const TalkerSequence& s) { return sequence_to_json(s).dump(); }

}  // namespace forge::talker
