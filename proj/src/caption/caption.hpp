#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "util/error.hpp"
#include "util/ojson.hpp"
#include "util/report.hpp"

namespace forge::caption {

// Thrown by render_caption for a record that fails validation.
class CaptionInvalid : public ArgumentError {
 public:
  explicit CaptionInvalid(ValidationReport r);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// The ten annotated attributes, in table order.
enum class Attribute {
  kGenderAge,
  kAccent,
  kEmotion,
  kTone,
  kSpeechRate,
  kVocalizations,
  kAffectiveBurst,
  kVocalPathology,
  kAcousticScene,
  kSoundEvents,
};

inline constexpr std::array<Attribute, 10> kAllAttributes = {
    Attribute::kGenderAge,     Attribute::kAccent,         Attribute::kEmotion,
    Attribute::kTone,          Attribute::kSpeechRate,     Attribute::kVocalizations,
    Attribute::kAffectiveBurst, Attribute::kVocalPathology, Attribute::kAcousticScene,
    Attribute::kSoundEvents,
};

// Display name, as used for taxonomy file keys ("Gender & Age").
std::string_view attribute_name(Attribute a);
std::optional<Attribute> attribute_from_name(std::string_view name);
bool is_multi_valued(Attribute a);

// A tag is either a vocabulary member or an `other(...)` escape carrying free text.
struct Tag {
  std::string value;
  bool other = false;

  static Tag of(std::string v) { return Tag{std::move(v), false}; }
  static Tag custom(std::string v) { return Tag{std::move(v), true}; }

  auto operator<=>(const Tag&) const = default;
};

struct SpeakerProfile {
  std::optional<Tag> gender_age;
  std::optional<Tag> accent;
  bool operator==(const SpeakerProfile&) const = default;
};

struct Prosody {
  std::optional<Tag> emotion;
  std::optional<Tag> tone;
  std::optional<Tag> speech_rate;
  bool operator==(const Prosody&) const = default;
};

struct Paralinguistics {
  std::vector<Tag> vocalizations;
  std::vector<Tag> affective_burst;
  bool operator==(const Paralinguistics&) const = default;
};

struct Environment {
  std::optional<Tag> acoustic_scene;
  std::vector<Tag> sound_events;
  bool operator==(const Environment&) const = default;
};

struct CaptionRecord {
  SpeakerProfile speaker_profile;
  Prosody prosody;
  Paralinguistics paralinguistics;
  std::vector<Tag> pathology;
  Environment environment;

  // Tags of one attribute (0 or 1 for single-valued attributes).
  std::vector<Tag> get(Attribute a) const;
  // Sets a single-valued attribute or appends to a multi-valued one.
  void add(Attribute a, Tag t);

  bool empty() const;
  bool operator==(const CaptionRecord&) const = default;
};

using TagEntry = std::pair<Attribute, Tag>;

// Sorted multiset of every (attribute, tag) in the record.
std::vector<TagEntry> tags(const CaptionRecord& c);

struct Vocabulary {
  std::vector<std::string> tags;
  // Open vocabularies accept `other(...)` tags; the table rows ending in an
  // ellipsis are open, Emotion is closed.
  bool open = true;
};

struct Taxonomy {
  std::string version;
  std::array<Vocabulary, 10> vocabularies;

  const Vocabulary& vocabulary(Attribute a) const {
    return vocabularies[static_cast<std::size_t>(a)];
  }
  bool contains(Attribute a, std::string_view tag) const;
};

// The bundled taxonomy, reproducing the published annotation table.
const Taxonomy& default_taxonomy();
const std::string& default_taxonomy_json();

// Loads a taxonomy document; throws ParseError on structural problems.
Taxonomy load_taxonomy(const Json& doc);
Json taxonomy_to_json(const Taxonomy& t);
ValidationReport validate_taxonomy(const Taxonomy& t);

ValidationReport validate_caption(const CaptionRecord& c, const Taxonomy& t = default_taxonomy());

// Renders a record as natural-language descriptor sentences. Deterministic for
// fixed (record, seed, taxonomy version). Throws CaptionInvalid on a record
// that does not validate.
std::string render_caption(const CaptionRecord& c, std::uint64_t seed,
                           const Taxonomy& t = default_taxonomy());

// Inverse of render_caption. Throws ParseError naming the offending fragment.
std::vector<TagEntry> extract_tags(std::string_view rendered, const Taxonomy& t = default_taxonomy());

// Phrase templates for an attribute; each contains exactly one "{}".
const std::vector<std::string>& phrase_templates(Attribute a);

Json caption_to_json(const CaptionRecord& c);
CaptionRecord caption_from_json(const Json& j);

}  // namespace forge::caption
