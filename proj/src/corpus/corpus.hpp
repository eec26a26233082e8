#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caption/caption.hpp"
#include "util/ojson.hpp"
#include "util/report.hpp"

namespace forge::corpus {

enum class Language { kZh, kEn, kJa, kKo, kOther };
enum class Source { kRealLife, kSynthetic, kPodcast, kAudiobook, kShortUtterance };
enum class Role { kUser, kAssistant };
enum class FlagKind {
  kLogicContradictionCorrectable,
  kLogicContradictionSevere,
  kMissingContext,
  kClean,
};

std::string_view to_string(Language v);
std::string_view to_string(Source v);
std::string_view to_string(Role v);
std::string_view to_string(FlagKind v);
std::optional<Language> language_from(std::string_view s);
std::optional<Source> source_from(std::string_view s);
std::optional<Role> role_from(std::string_view s);
std::optional<FlagKind> flag_kind_from(std::string_view s);

// Half-open [start, end).
struct Range {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t size() const { return end - start; }
  bool empty() const { return end <= start; }
  bool overlaps(const Range& o) const { return start < o.end && o.start < end; }
  bool operator==(const Range&) const = default;
};

// 12.5 Hz after the adapter halves the 25 Hz encoder rate.
inline constexpr double kTokenRateHz = 12.5;
inline constexpr double kEncoderRateHz = 25.0;

struct AudioTokenSpan {
  std::vector<std::int64_t> token_ids;
  double frame_rate_hz = kTokenRateHz;
  double duration_s = 0.0;

  bool operator==(const AudioTokenSpan&) const = default;
};

struct AlignmentSpan {
  Range text_range;   // Unicode scalar offsets into Turn::text
  Range audio_range;  // token offsets into Turn::audio
  std::int64_t index = 0;

  bool operator==(const AlignmentSpan&) const = default;
};

// Severe-contradiction spans are character ranges over the dialogue's turn
// texts laid end to end (see global_text_offsets).
struct QualityFlag {
  FlagKind kind = FlagKind::kClean;
  std::vector<Range> spans;

  bool operator==(const QualityFlag&) const = default;
};

struct Turn {
  Role role = Role::kUser;
  std::string speaker_id;
  std::string text;  // UTF-8
  std::optional<AudioTokenSpan> audio;
  std::vector<AlignmentSpan> alignment;
  std::optional<caption::CaptionRecord> caption;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  Language language = Language::kEn;
  Source source = Source::kRealLife;
  std::vector<QualityFlag> quality_flags;

  bool has_flag(FlagKind k) const;
  bool operator==(const Dialogue&) const = default;
};

Json dialogue_to_json(const Dialogue& d);
// Throws ParseError with a field path and reason on schema violations.
Dialogue dialogue_from_json(const Json& j);

// Canonical single-line serialization: fixed key order, no whitespace.
std::string serialize_dialogue(const Dialogue& d);
Dialogue parse_dialogue(std::string_view line);

struct Reject {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct ParsedCorpus {
  std::vector<Dialogue> dialogues;
  std::vector<std::size_t> lines;  // source line of each dialogue
  std::vector<Reject> rejects;
};

// Blank lines are skipped; every other line is either a dialogue or a reject.
// Results do not depend on `jobs`.
ParsedCorpus parse_corpus_text(std::string_view text, unsigned jobs = 1);
// Throws IoError when the file cannot be read.
ParsedCorpus parse_corpus(const std::string& path, unsigned jobs = 1);

std::string serialize_corpus(const std::vector<Dialogue>& dialogues);
void write_corpus(const std::string& path, const std::vector<Dialogue>& dialogues);

// 25 Hz -> 12.5 Hz: pad an odd count by one frame, then pool pairs.
std::int64_t downsample_frames(std::int64_t n_frames);

// round(hours * 3600 * rate_hz), halves away from zero.
std::int64_t tokens_for_hours(double hours, double rate_hz = kTokenRateHz);

// Token count implied by a duration; the span invariant allows +-1 around it.
std::int64_t expected_token_count(double duration_s, double rate_hz);

ValidationReport validate_dialogue(const Dialogue& d);
// Per-dialogue reports (prefixed "dialogues[i].") plus corpus-level id uniqueness.
ValidationReport validate_corpus(const std::vector<Dialogue>& dialogues);

// Start offset (in scalars) of each turn when turn texts are laid end to end;
// the final entry is the total length.
std::vector<std::int64_t> global_text_offsets(const Dialogue& d);

struct TurnSpan {
  std::size_t turn = 0;
  Range range;
  bool operator==(const TurnSpan&) const = default;
};

// Projects dialogue-level ranges onto turns, splitting at turn boundaries.
std::vector<TurnSpan> project_to_turns(const Dialogue& d, const std::vector<Range>& global);

// Turn-local spans of every severe-contradiction flag.
std::vector<TurnSpan> severe_spans(const Dialogue& d);

}  // namespace forge::corpus
