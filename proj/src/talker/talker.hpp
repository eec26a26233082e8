#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"
#include "util/error.hpp"
#include "util/ojson.hpp"

namespace forge::talker {

enum class SpecialToken { kRefStart, kRefEnd, kRoleUser, kRoleAssistant, kTextShift, kSpeechShift, kEos };
inline constexpr std::size_t kSpecialTokenCount = 7;
std::string_view to_string(SpecialToken t);

// Text ids are Unicode scalar values; speech ids are opaque and must stay below
// kSpecialBase so the reserved ids never collide with either stream.
inline constexpr std::int64_t kTextIdLimit = 0x110000;
inline constexpr std::int64_t kSpecialBase = 1'000'000'000;

struct SpecialTokenRegistry {
  std::string version = "talker-special-v1";
  std::array<std::int64_t, kSpecialTokenCount> ids{};

  std::int64_t id(SpecialToken t) const { return ids[static_cast<std::size_t>(t)]; }
  std::optional<SpecialToken> lookup(std::int64_t id) const;
};

const SpecialTokenRegistry& default_registry();
Json registry_to_json(const SpecialTokenRegistry& r);
// Rejects duplicate ids and ids inside the text or speech ranges.
SpecialTokenRegistry load_registry(const Json& j);

enum class Stream { kSpecial, kText, kSpeech };

struct Token {
  Stream stream;
  std::int64_t id;
  bool operator==(const Token&) const = default;
};

enum class Mode { kDialogue, kLongText, kStandardSentence };
std::string_view to_string(Mode m);
std::optional<Mode> mode_from(std::string_view s);
// dialogue for conversational sources, long_text for audiobooks, standard_sentence otherwise.
Mode mode_for_source(corpus::Source s);

struct StreamRatio {
  std::int64_t n_text = 5;
  std::int64_t m_speech = 15;
  // Draw each block's chunk sizes uniformly from [1, n_text] and [1, m_speech].
  bool randomized = false;
};
void check_ratio(const StreamRatio& r);
// Parses "N:M".
StreamRatio parse_ratio(std::string_view s);

struct SegmentRef {
  std::string dialogue_id;
  std::size_t turn = 0;
  auto operator<=>(const SegmentRef&) const = default;
};

// Speaker -> audio-bearing segments, built once then read-only.
class CorpusIndex {
 public:
  CorpusIndex() = default;
  explicit CorpusIndex(const std::vector<corpus::Dialogue>& dialogues);

  const std::vector<SegmentRef>& segments(const std::string& speaker_id) const;
  const corpus::AudioTokenSpan& audio(const SegmentRef& ref) const;
  std::size_t speaker_count() const { return by_speaker_.size(); }

 private:
  std::map<std::string, std::vector<SegmentRef>> by_speaker_;
  std::map<SegmentRef, corpus::AudioTokenSpan> audio_;
};

struct Reference {
  SegmentRef segment;
  corpus::AudioTokenSpan audio;
};

// Uniform over the speaker's segments outside `current_sample_id`. Throws
// NoReferenceError when none exists.
Reference select_reference(const std::string& speaker_id, const CorpusIndex& index,
                           const std::string& current_sample_id, std::uint64_t seed);

// n_text text ids, then m_speech speech ids, repeating; the stream that lasts
// longer is emitted contiguously once the other runs out.
std::vector<Token> stream_interleave(const std::vector<std::int64_t>& text_ids,
                                     const std::vector<std::int64_t>& speech_ids, const StreamRatio& ratio);

struct TalkerSequence {
  std::string sample_id;
  Mode mode = Mode::kDialogue;
  std::uint64_t record_seed = 0;
  SegmentRef reference;
  std::vector<Token> tokens;
  std::vector<bool> speech_loss_mask;
};

// Character-level stand-in for text token ids.
std::vector<std::int64_t> text_token_ids(const std::string& text);

// Throws CompileError on a mode/input mismatch and NoReferenceError when the
// target speaker has no independent segment.
TalkerSequence assemble(const corpus::Dialogue& d, Mode mode, const StreamRatio& ratio, const CorpusIndex& index,
                        std::uint64_t master_seed, const SpecialTokenRegistry& registry = default_registry());

struct Block {
  SpecialToken role = SpecialToken::kRoleAssistant;
  std::vector<std::int64_t> text_ids;
  std::vector<std::int64_t> speech_ids;
  bool operator==(const Block&) const = default;
};

struct ParsedSequence {
  std::vector<std::int64_t> reference;
  std::vector<Block> blocks;
};

class GrammarError : public ParseError {
 public:
  GrammarError(std::size_t index, const std::string& what)
      : ParseError("token " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

ParsedSequence parse_sequence(const std::vector<Token>& tokens,
                              const SpecialTokenRegistry& registry = default_registry());

Json sequence_to_json(const TalkerSequence& s);
std::string serialize_sequence(const TalkerSequence& s);

}  // namespace forge::talker
