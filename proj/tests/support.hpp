#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "corpus/corpus.hpp"
#include "util/utf8.hpp"

namespace forge::test {

// A turn whose alignment splits `pieces` one span each; with audio, each piece
// gets two tokens per character.
inline corpus::Turn turn(corpus::Role role, const std::string& speaker, const std::vector<std::string>& pieces,
                         bool audio = true, std::int64_t token_base = 0) {
  corpus::Turn t;
  t.role = role;
  t.speaker_id = speaker;
  corpus::AudioTokenSpan a;
  std::int64_t c = 0, tok = 0;
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const auto len = static_cast<std::int64_t>(utf8::length(pieces[k]));
    corpus::AlignmentSpan s;
    s.text_range = {c, c + len};
    s.audio_range = audio ? corpus::Range{tok, tok + 2 * len} : corpus::Range{0, 0};
    s.index = static_cast<std::int64_t>(k);
    t.alignment.push_back(s);
    if (audio)
      for (std::int64_t i = 0; i < 2 * len; ++i) a.token_ids.push_back(token_base + tok + i);
    t.text += pieces[k];
    c += len;
    tok += audio ? 2 * len : 0;
  }
  if (audio) {
    a.duration_s = static_cast<double>(a.token_ids.size()) / corpus::kTokenRateHz;
    t.audio = std::move(a);
  }
  return t;
}

inline corpus::Turn user(const std::string& text, bool audio = true, const std::string& spk = "u1") {
  return turn(corpus::Role::kUser, spk, {text}, audio);
}

inline corpus::Turn assistant(const std::vector<std::string>& pieces, bool audio = true,
                              const std::string& spk = "a1") {
  return turn(corpus::Role::kAssistant, spk, pieces, audio);
}

inline corpus::Dialogue dialogue(const std::string& id, std::vector<corpus::Turn> turns,
                                 corpus::Source source = corpus::Source::kRealLife) {
  corpus::Dialogue d;
  d.id = id;
  d.turns = std::move(turns);
  d.source = source;
  d.quality_flags.push_back({corpus::FlagKind::kClean, {}});
  return d;
}

inline corpus::Dialogue two_turn(const std::string& id = "d1") {
  return dialogue(id, {user("Hello there."), assistant({"Hi. ", "How can I help?"})});
}

}  // namespace forge::test
