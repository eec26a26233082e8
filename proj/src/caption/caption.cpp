#include "caption/caption.hpp"

#include <algorithm>
#include <set>

#include "util/rng.hpp"

namespace forge::caption {

namespace {

constexpr std::array<std::string_view, 10> kNames = {
    "Gender & Age",  "Accent",          "Emotion",         "Tone",           "Speech Rate",
    "Vocalizations", "Affective Burst", "Vocal Pathology", "Acoustic Scene", "Sound Events",
};

constexpr std::string_view kNothingAnnotated = "No salient acoustic attributes were annotated.";

std::size_t idx(Attribute a) { return static_cast<std::size_t>(a); }

std::string join_report(const ValidationReport& r) {
  std::string out = "caption record is invalid:";
  for (const auto& v : r) out += " " + v.path + ": " + v.message + ";";
  return out;
}

}  // namespace

CaptionInvalid::CaptionInvalid(ValidationReport r)
    : ArgumentError(join_report(r)), report_(std::move(r)) {}

std::string_view attribute_name(Attribute a) { return kNames[idx(a)]; }

std::optional<Attribute> attribute_from_name(std::string_view name) {
  for (auto a : kAllAttributes)
    if (kNames[idx(a)] == name) return a;
  return std::nullopt;
}

bool is_multi_valued(Attribute a) {
  switch (a) {
    case Attribute::kVocalizations:
    case Attribute::kAffectiveBurst:
    case Attribute::kVocalPathology:
    case Attribute::kSoundEvents:
      return true;
    default:
      return false;
  }
}

std::vector<Tag> CaptionRecord::get(Attribute a) const {
  auto one = [](const std::optional<Tag>& t) {
    return t ? std::vector<Tag>{*t} : std::vector<Tag>{};
  };
  switch (a) {
    case Attribute::kGenderAge: return one(speaker_profile.gender_age);
    case Attribute::kAccent: return one(speaker_profile.accent);
    case Attribute::kEmotion: return one(prosody.emotion);
    case Attribute::kTone: return one(prosody.tone);
    case Attribute::kSpeechRate: return one(prosody.speech_rate);
    case Attribute::kVocalizations: return paralinguistics.vocalizations;
    case Attribute::kAffectiveBurst: return paralinguistics.affective_burst;
    case Attribute::kVocalPathology: return pathology;
    case Attribute::kAcousticScene: return one(environment.acoustic_scene);
    case Attribute::kSoundEvents: return environment.sound_events;
  }
  return {};
}

void CaptionRecord::add(Attribute a, Tag t) {
  switch (a) {
    case Attribute::kGenderAge: speaker_profile.gender_age = std::move(t); break;
    case Attribute::kAccent: speaker_profile.accent = std::move(t); break;
    case Attribute::kEmotion: prosody.emotion = std::move(t); break;
    case Attribute::kTone: prosody.tone = std::move(t); break;
    case Attribute::kSpeechRate: prosody.speech_rate = std::move(t); break;
    case Attribute::kVocalizations: paralinguistics.vocalizations.push_back(std::move(t)); break;
    case Attribute::kAffectiveBurst: paralinguistics.affective_burst.push_back(std::move(t)); break;
    case Attribute::kVocalPathology: pathology.push_back(std::move(t)); break;
    case Attribute::kAcousticScene: environment.acoustic_scene = std::move(t); break;
    case Attribute::kSoundEvents: environment.sound_events.push_back(std::move(t)); break;
  }
}

bool CaptionRecord::empty() const {
  return std::all_of(kAllAttributes.begin(), kAllAttributes.end(),
                     [&](Attribute a) { return get(a).empty(); });
}

std::vector<TagEntry> tags(const CaptionRecord& c) {
  std::vector<TagEntry> out;
  for (auto a : kAllAttributes)
    for (auto& t : c.get(a)) out.emplace_back(a, t);
  std::sort(out.begin(), out.end());
  return out;
}

bool Taxonomy::contains(Attribute a, std::string_view tag) const {
  const auto& v = vocabulary(a).tags;
  return std::find(v.begin(), v.end(), tag) != v.end();
}

const std::string& default_taxonomy_json() {
  static const std::string doc = R"({
  "version": "taxonomy-v1",
  "Gender & Age": {"open": true, "tags": ["Young male", "Middle-aged female", "Elderly male", "Child", "Infant"]},
  "Accent": {"open": true, "tags": ["Standard Mandarin", "Beijing Accent", "Cantonese", "Wu/Shanghainese", "English"]},
  "Emotion": {"open": false, "tags": ["Neutral", "Happy", "Sad", "Angry", "Fearful", "Surprised", "Disgusted"]},
  "Tone": {"open": true, "tags": ["Calm", "Questioning", "Hesitant", "Complaining", "Coquettish", "Commanding", "Excited"]},
  "Speech Rate": {"open": true, "tags": ["Normal", "Fast", "Very Fast", "Slow", "Drawling", "Variable speed"]},
  "Vocalizations": {"open": true, "tags": ["Sighing", "Coughing", "Throat clearing", "Sneezing", "Breathing", "Sniffling", "Yawning"]},
  "Affective Burst": {"open": true, "tags": ["Crying", "Screaming", "Sobbing", "Laughing", "Whispering"]},
  "Vocal Pathology": {"open": true, "tags": ["Hoarse", "Husky", "Stuttering", "Nasal", "Trembling", "Vocal damage", "Slurred speech"]},
  "Acoustic Scene": {"open": true, "tags": ["Quiet indoor", "Office", "Street", "Library", "Cafe", "Kitchen", "Residential area"]},
  "Sound Events": {"open": true, "tags": ["Clapping", "Footsteps", "Knocking", "Car door closing", "Whistling", "Vomiting"]}
}
)";
  return doc;
}

const Taxonomy& default_taxonomy() {
  static const Taxonomy t = load_taxonomy(Json::parse(default_taxonomy_json()));
  return t;
}

Taxonomy load_taxonomy(const Json& doc) {
  if (!doc.is_object()) throw ParseError("taxonomy: expected a JSON object");
  Taxonomy t;
  if (!doc.contains("version") || !doc["version"].is_string())
    throw ParseError("taxonomy: missing string field `version`");
  t.version = doc["version"].get<std::string>();
  for (auto a : kAllAttributes) {
    const std::string name(attribute_name(a));
    if (!doc.contains(name)) throw ParseError("taxonomy: missing attribute `" + name + "`");
    const auto& entry = doc[name];
    Vocabulary v;
    const Json* list = &entry;
    if (entry.is_object()) {
      if (!entry.contains("tags")) throw ParseError("taxonomy: `" + name + "` has no `tags`");
      list = &entry["tags"];
      v.open = entry.value("open", true);
    }
    if (!list->is_array()) throw ParseError("taxonomy: `" + name + "` tags must be an array");
    for (const auto& tag : *list) {
      if (!tag.is_string()) throw ParseError("taxonomy: `" + name + "` contains a non-string tag");
      v.tags.push_back(tag.get<std::string>());
    }
    t.vocabularies[idx(a)] = std::move(v);
  }
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (it.key() != "version" && !attribute_from_name(it.key()))
      throw ParseError("taxonomy: unknown attribute `" + it.key() + "`");
  if (auto r = validate_taxonomy(t); !r.empty())
    throw ParseError("taxonomy: " + r.front().path + ": " + r.front().message);
  return t;
}

Json taxonomy_to_json(const Taxonomy& t) {
  Json doc;
  doc["version"] = t.version;
  for (auto a : kAllAttributes) {
    const auto& v = t.vocabulary(a);
    doc[std::string(attribute_name(a))] = Json{{"open", v.open}, {"tags", v.tags}};
  }
  return doc;
}

ValidationReport validate_taxonomy(const Taxonomy& t) {
  ValidationReport r;
  for (auto a : kAllAttributes) {
    const auto& v = t.vocabulary(a);
    const std::string path(attribute_name(a));
    if (v.tags.empty()) r.push_back({path, "vocabulary is empty"});
    std::set<std::string> seen;
    for (const auto& tag : v.tags)
      if (!seen.insert(tag).second) r.push_back({path, "duplicate tag `" + tag + "`"});
  }
  return r;
}

namespace {

// Free-text tags must survive rendering and re-parsing.
std::optional<std::string> other_text_problem(const std::string& s) {
  if (s.empty()) return "other() text is empty";
  if (s.front() == ' ' || s.back() == ' ') return "other() text has surrounding whitespace";
  if (s.find('.') != std::string::npos) return "other() text contains '.'";
  if (s.find(',') != std::string::npos) return "other() text contains ','";
  if (s.find(" and ") != std::string::npos) return "other() text contains \" and \"";
  return std::nullopt;
}

}  // namespace

ValidationReport validate_caption(const CaptionRecord& c, const Taxonomy& t) {
  ValidationReport r;
  for (auto a : kAllAttributes) {
    const auto values = c.get(a);
    const std::string base(attribute_name(a));
    std::set<Tag> seen;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& tag = values[i];
      const std::string path = is_multi_valued(a) ? base + "[" + std::to_string(i) + "]" : base;
      if (!seen.insert(tag).second) r.push_back({path, "duplicate tag `" + tag.value + "`"});
      if (!tag.other) {
        if (!t.contains(a, tag.value))
          r.push_back({path, "tag `" + tag.value + "` is not in the " + base + " vocabulary"});
        continue;
      }
      if (!t.vocabulary(a).open) {
        r.push_back({path, base + " is a closed vocabulary; other(" + tag.value + ") not allowed"});
        continue;
      }
      if (auto problem = other_text_problem(tag.value)) r.push_back({path, *problem});
      if (t.contains(a, tag.value))
        r.push_back({path, "other(" + tag.value + ") duplicates a vocabulary tag"});
    }
  }
  return r;
}

const std::vector<std::string>& phrase_templates(Attribute a) {
  static const std::array<std::vector<std::string>, 10> table = {{
      {"Speaker profile: {}.", "The voice belongs to a speaker described as {}.",
       "By gender and age, the speaker is {}."},
      {"The accent is {}.", "They speak with an accent best described as {}.",
       "Accent-wise, the speech is {}."},
      {"The emotion conveyed is {}.", "Emotionally, the speaker comes across as {}.",
       "The emotional state of the speaker is {}."},
      {"The tone is {}.", "The speaker adopts a tone that is {}.",
       "In terms of tone, the delivery is {}."},
      {"The speech rate is {}.", "The speaking pace can be called {}.",
       "Regarding tempo, the speech is {}."},
      {"Audible vocalizations include {}.", "The recording contains vocalizations such as {}.",
       "Non-verbal vocal sounds present: {}."},
      {"Affective bursts include {}.", "The speaker shows affective bursts of {}.",
       "Emotional outbursts heard: {}."},
      {"Vocal pathology noted: {}.", "The voice shows pathological traits: {}.",
       "Signs of vocal pathology include {}."},
      {"The acoustic scene is {}.", "The recording takes place in a setting described as {}.",
       "Environment-wise, the scene is {}."},
      {"Sound events include {}.", "In the background one can hear {}.",
       "Notable sound events: {}."},
  }};
  return table[idx(a)];
}

namespace {

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

std::string fill(const std::string& tmpl, const std::string& value) {
  const auto at = tmpl.find("{}");
  return tmpl.substr(0, at) + value + tmpl.substr(at + 2);
}

}  // namespace

std::string render_caption(const CaptionRecord& c, std::uint64_t seed, const Taxonomy& t) {
  if (auto r = validate_caption(c, t); !r.empty()) throw CaptionInvalid(std::move(r));
  if (c.empty()) return std::string(kNothingAnnotated);
  Rng rng(seed);
  std::string out;
  for (auto a : kAllAttributes) {
    const auto values = c.get(a);
    if (values.empty()) continue;
    const auto& templates = phrase_templates(a);
    const auto& tmpl = templates[rng.below(templates.size())];
    std::vector<std::string> items;
    for (const auto& v : values) items.push_back(v.value);
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
    if (!out.empty()) out.push_back(' ');
    out += fill(tmpl, join_list(items));
  }
  return out;
}

namespace {

std::vector<std::string> split_list(const std::string& body, const std::string& sentence) {
  std::vector<std::string> items;
  const auto last_and = body.rfind(" and ");
  std::string head = last_and == std::string::npos ? body : body.substr(0, last_and);
  if (last_and == std::string::npos && head.find(", ") != std::string::npos)
    throw ParseError("malformed tag list in caption fragment: '" + sentence + "'");
  std::size_t start = 0;
  for (;;) {
    const auto comma = head.find(", ", start);
    items.push_back(head.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 2;
  }
  if (last_and != std::string::npos) items.push_back(body.substr(last_and + 5));
  for (const auto& item : items)
    if (item.empty()) throw ParseError("empty tag in caption fragment: '" + sentence + "'");
  return items;
}

}  // namespace

std::vector<TagEntry> extract_tags(std::string_view rendered, const Taxonomy& t) {
  if (rendered.empty()) throw ParseError("empty caption string");
  if (rendered == kNothingAnnotated) return {};

  std::vector<std::string> sentences;
  std::size_t pos = 0;
  while (pos < rendered.size()) {
    const auto dot = rendered.find('.', pos);
    if (dot == std::string_view::npos)
      throw ParseError("unrecognized caption fragment: '" + std::string(rendered.substr(pos)) + "'");
    sentences.emplace_back(rendered.substr(pos, dot + 1 - pos));
    pos = dot + 1;
    if (pos < rendered.size()) {
      if (rendered[pos] != ' ' || pos + 1 == rendered.size())
        throw ParseError("unrecognized caption fragment: '" + std::string(rendered.substr(pos)) + "'");
      ++pos;
    }
  }

  std::vector<TagEntry> out;
  std::set<Attribute> seen;
  for (const auto& s : sentences) {
    std::optional<Attribute> attr;
    std::string body;
    int matches = 0;
    for (auto a : kAllAttributes) {
      for (const auto& tmpl : phrase_templates(a)) {
        const auto at = tmpl.find("{}");
        const auto prefix = tmpl.substr(0, at);
        const auto suffix = tmpl.substr(at + 2);
        if (s.size() > prefix.size() + suffix.size() && s.starts_with(prefix) && s.ends_with(suffix)) {
          ++matches;
          attr = a;
          body = s.substr(prefix.size(), s.size() - prefix.size() - suffix.size());
        }
      }
    }
    if (matches == 0) throw ParseError("unrecognized caption fragment: '" + s + "'");
    if (matches > 1) throw ParseError("ambiguous caption fragment: '" + s + "'");
    if (!seen.insert(*attr).second)
      throw ParseError("attribute " + std::string(attribute_name(*attr)) +
                       " described twice, at fragment: '" + s + "'");
    const auto items = is_multi_valued(*attr) ? split_list(body, s) : std::vector<std::string>{body};
    for (const auto& item : items) {
      if (t.contains(*attr, item)) {
        out.emplace_back(*attr, Tag::of(item));
      } else if (t.vocabulary(*attr).open) {
        out.emplace_back(*attr, Tag::custom(item));
      } else {
        throw ParseError("unknown " + std::string(attribute_name(*attr)) + " tag '" + item +
                         "' in caption fragment: '" + s + "'");
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

Json tag_to_json(const Tag& t) {
  if (t.other) return Json{{"other", t.value}};
  return t.value;
}

Tag tag_from_json(const Json& j, const std::string& path) {
  if (j.is_string()) return Tag::of(j.get<std::string>());
  if (j.is_object() && j.size() == 1 && j.contains("other") && j["other"].is_string())
    return Tag::custom(j["other"].get<std::string>());
  throw ParseError("field `" + path + "`: expected a tag string or {\"other\": string}");
}

Json opt_tag(const std::optional<Tag>& t) { return t ? tag_to_json(*t) : Json(nullptr); }

Json tag_list(const std::vector<Tag>& ts) {
  Json a = Json::array();
  for (const auto& t : ts) a.push_back(tag_to_json(t));
  return a;
}

std::optional<Tag> read_opt(const Json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  return tag_from_json(obj[key], path + "." + key);
}

std::vector<Tag> read_list(const Json& obj, const char* key, const std::string& path) {
  std::vector<Tag> out;
  if (!obj.contains(key) || obj[key].is_null()) return out;
  if (!obj[key].is_array()) throw ParseError("field `" + path + "." + key + "`: expected an array");
  for (std::size_t i = 0; i < obj[key].size(); ++i)
    out.push_back(tag_from_json(obj[key][i], path + "." + key + "[" + std::to_string(i) + "]"));
  return out;
}

const Json& section(const Json& j, const char* key) {
  static const Json kEmpty = Json::object();
  if (!j.contains(key) || j[key].is_null()) return kEmpty;
  if (!j[key].is_object()) throw ParseError(std::string("field `caption.") + key + "`: expected an object");
  return j[key];
}

}  // namespace

Json caption_to_json(const CaptionRecord& c) {
  Json j;
  j["speaker_profile"] = Json{{"gender_age", opt_tag(c.speaker_profile.gender_age)},
                              {"accent", opt_tag(c.speaker_profile.accent)}};
  j["prosody"] = Json{{"emotion", opt_tag(c.prosody.emotion)},
                      {"tone", opt_tag(c.prosody.tone)},
                      {"speech_rate", opt_tag(c.prosody.speech_rate)}};
  j["paralinguistics"] = Json{{"vocalizations", tag_list(c.paralinguistics.vocalizations)},
                              {"affective_burst", tag_list(c.paralinguistics.affective_burst)}};
  j["pathology"] = tag_list(c.pathology);
  j["environment"] = Json{{"acoustic_scene", opt_tag(c.environment.acoustic_scene)},
                          {"sound_events", tag_list(c.environment.sound_events)}};
  return j;
}

CaptionRecord caption_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("field `caption`: expected an object");
  CaptionRecord c;
  const auto& sp = section(j, "speaker_profile");
  c.speaker_profile.gender_age = read_opt(sp, "gender_age", "caption.speaker_profile");
  c.speaker_profile.accent = read_opt(sp, "accent", "caption.speaker_profile");
  const auto& pr = section(j, "prosody");
  c.prosody.emotion = read_opt(pr, "emotion", "caption.prosody");
  c.prosody.tone = read_opt(pr, "tone", "caption.prosody");
  c.prosody.speech_rate = read_opt(pr, "speech_rate", "caption.prosody");
  const auto& pl = section(j, "paralinguistics");
  c.paralinguistics.vocalizations = read_list(pl, "vocalizations", "caption.paralinguistics");
  c.paralinguistics.affective_burst = read_list(pl, "affective_burst", "caption.paralinguistics");
  c.pathology = read_list(j, "pathology", "caption");
  const auto& env = section(j, "environment");
  c.environment.acoustic_scene = read_opt(env, "acoustic_scene", "caption.environment");
  c.environment.sound_events = read_list(env, "sound_events", "caption.environment");
  return c;
}

}  // namespace forge::caption
