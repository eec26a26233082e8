#include "templates/templates.hpp"

#include <algorithm>
#include <unordered_set>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace forge::templates {

ValidationReport validate_task(const TaskSpec& spec) {
  ValidationReport r;
  if (spec.task_id.empty()) r.push_back({"task_id", "task id is empty"});
  if (spec.languages.empty()) r.push_back({"languages", "no language declared"});
  if (spec.slots.empty()) r.push_back({"slots", "grammar has no slots"});
  for (std::size_t i = 0; i < spec.slots.size(); ++i)
    if (spec.slots[i].alternatives.empty())
      r.push_back({"slots[" + std::to_string(i) + "]", "slot has no alternatives"});
  return r;
}

namespace {

std::uint64_t radix(const Slot& s) { return s.alternatives.size() + (s.optional ? 1 : 0); }

void require_valid(const TaskSpec& spec) {
  if (auto r = validate_task(spec); !r.empty())
    throw ArgumentError("task " + spec.task_id + ": " + r.front().path + ": " + r.front().message);
}

// Fragment for slot choice c; empty string for an absent optional slot.
const std::string* fragment(const Slot& s, std::uint64_t c) {
  if (s.optional) {
    if (c == 0) return nullptr;
    --c;
  }
  return &s.alternatives[c];
}

std::string compose(const TaskSpec& spec, const std::vector<std::uint64_t>& choice) {
  std::string text;
  for (std::size_t i = 0; i < spec.slots.size(); ++i) {
    const auto* f = fragment(spec.slots[i], choice[i]);
    if (!f || f->empty()) continue;
    if (!text.empty()) text += spec.separator;
    text += *f;
  }
  return text;
}

// Odometer with the last slot varying fastest, i.e. lexicographic order.
bool advance(const TaskSpec& spec, std::vector<std::uint64_t>& choice) {
  for (std::size_t i = spec.slots.size(); i-- > 0;) {
    if (++choice[i] < radix(spec.slots[i])) return true;
    choice[i] = 0;
  }
  return false;
}

constexpr std::uint64_t kFullExpansionCap = 1u << 20;

}  // namespace

std::uint64_t combination_count(const TaskSpec& spec) {
  std::uint64_t n = 1;
  for (const auto& s : spec.slots) {
    const auto k = radix(s);
    if (k == 0) return 0;
    if (n > UINT64_MAX / k) return UINT64_MAX;
    n *= k;
  }
  return n;
}

std::vector<PromptVariant> expand_templates(const TaskSpec& spec, std::uint64_t limit) {
  if (limit < 1) throw ArgumentError("expand_templates: limit must be >= 1");
  require_valid(spec);
  std::vector<PromptVariant> out;
  std::unordered_set<std::string> seen;
  std::vector<std::uint64_t> choice(spec.slots.size(), 0);
  do {
    auto text = compose(spec, choice);
    if (text.empty() || !seen.insert(text).second) continue;
    out.push_back({spec.task_id, spec.languages.front(), std::move(text), out.size()});
  } while (out.size() < limit && advance(spec, choice));
  return out;
}

PromptVariant sample_prompt(const TaskSpec& spec, std::uint64_t seed) {
  require_valid(spec);
  Rng rng(seed);
  const auto n = combination_count(spec);
  if (n <= kFullExpansionCap) {
    auto all = expand_templates(spec, n);
    return all[rng.below(all.size())];
  }
  // Too large to enumerate: decode a uniform mixed-radix index directly. This
  // is uniform over texts whenever the grammar produces no duplicate texts.
  std::vector<std::uint64_t> choice(spec.slots.size());
  for (std::size_t i = 0; i < spec.slots.size(); ++i) choice[i] = rng.below(radix(spec.slots[i]));
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < spec.slots.size(); ++i) index = index * radix(spec.slots[i]) + choice[i];
  return {spec.task_id, spec.languages.front(), compose(spec, choice), index};
}

bool matches_grammar(const TaskSpec& spec, std::string_view text) {
  // Depth-first match of slot fragments against the text.
  auto rec = [&](auto&& self, std::size_t slot, std::size_t pos, bool first) -> bool {
    if (slot == spec.slots.size()) return pos == text.size();
    const auto& s = spec.slots[slot];
    if (s.optional && self(self, slot + 1, pos, first)) return true;
    for (const auto& alt : s.alternatives) {
      if (alt.empty()) {
        if (self(self, slot + 1, pos, first)) return true;
        continue;
      }
      std::size_t p = pos;
      if (!first) {
        if (text.substr(p, spec.separator.size()) != spec.separator) continue;
        p += spec.separator.size();
      }
      if (text.substr(p, alt.size()) == alt && self(self, slot + 1, p + alt.size(), false)) return true;
    }
    return false;
  };
  return !text.empty() && rec(rec, 0, 0, true);
}

std::vector<std::pair<std::string, std::string>> build_only_yes_set(const std::vector<std::string>& audio_ids) {
  if (audio_ids.empty()) throw ArgumentError("build_only_yes_set: no audio ids");
  std::unordered_set<std::string> seen;
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(audio_ids.size());
  for (const auto& id : audio_ids) {
    if (!seen.insert(id).second) throw ArgumentError("build_only_yes_set: duplicate audio id \"" + id + "\"");
    out.emplace_back(id, std::string(kOnlyYesInstruction));
  }
  return out;
}

Registry load_registry(const Json& doc) {
  if (!doc.is_object()) throw ParseError("task registry: expected a JSON object");
  Registry r;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& j = it.value();
    const std::string where = "task registry: `" + it.key() + "`";
    if (!j.is_object() || !j.contains("slots") || !j["slots"].is_array())
      throw ParseError(where + ": expected an object with a `slots` array");
    TaskSpec spec;
    spec.task_id = it.key();
    if (j.contains("languages")) {
      if (!j["languages"].is_array()) throw ParseError(where + ": `languages` must be an array");
      for (const auto& l : j["languages"]) spec.languages.push_back(l.get<std::string>());
    }
    for (const auto& sj : j["slots"]) {
      if (!sj.is_object() || !sj.contains("alternatives") || !sj["alternatives"].is_array())
        throw ParseError(where + ": every slot needs an `alternatives` array");
      Slot s;
      for (const auto& a : sj["alternatives"]) {
        if (!a.is_string()) throw ParseError(where + ": slot alternatives must be strings");
        s.alternatives.push_back(a.get<std::string>());
      }
      s.optional = sj.value("optional", false);
      spec.slots.push_back(std::move(s));
    }
    spec.separator = j.value("separator", std::string(" "));
    if (auto rep = validate_task(spec); !rep.empty())
      throw ParseError(where + ": " + rep.front().path + ": " + rep.front().message);
    r.emplace(spec.task_id, std::move(spec));
  }
  return r;
}

Json registry_to_json(const Registry& r) {
  Json doc = Json::object();
  for (const auto& [id, spec] : r) {
    Json slots = Json::array();
    for (const auto& s : spec.slots) slots.push_back(Json{{"alternatives", s.alternatives}, {"optional", s.optional}});
    doc[id] = Json{{"languages", spec.languages}, {"slots", std::move(slots)}, {"separator", spec.separator}};
  }
  return doc;
}

const std::string& default_registry_json() {
  static const std::string doc = R"({
  "asr/en": {"languages": ["en"], "slots": [
    {"alternatives": ["Please", "Kindly", "Could you"], "optional": true},
    {"alternatives": ["transcribe", "write down", "convert to text"]},
    {"alternatives": ["the audio", "this recording", "the speech", "what is said in the clip"]},
    {"alternatives": ["verbatim", "word for word", "exactly"], "optional": true}
  ]},
  "asr/zh": {"languages": ["zh"], "separator": "", "slots": [
    {"alternatives": ["请", "麻烦"], "optional": true},
    {"alternatives": ["转写", "识别", "写出"]},
    {"alternatives": ["这段音频", "这段录音", "语音内容"]},
    {"alternatives": ["的文字", "中说的话"], "optional": true}
  ]},
  "caption/en": {"languages": ["en"], "slots": [
    {"alternatives": ["Describe", "Characterize", "Summarize"]},
    {"alternatives": ["the speaker's voice", "the acoustic properties", "the sound"]},
    {"alternatives": ["in detail", "including emotion and tone", "including the environment"], "optional": true}
  ]},
  "ser/en": {"languages": ["en"], "slots": [
    {"alternatives": ["What emotion", "Which emotion", "What feeling"]},
    {"alternatives": ["does the speaker express", "is conveyed", "comes through"]},
    {"alternatives": ["in this clip?", "in the audio?", "here?"]}
  ]},
  "aed/en": {"languages": ["en"], "slots": [
    {"alternatives": ["List", "Name", "Identify"]},
    {"alternatives": ["the sound events", "the background sounds", "the acoustic events"]},
    {"alternatives": ["you can hear", "present in the recording"], "optional": true}
  ]},
  "s2tt/en-zh": {"languages": ["en"], "slots": [
    {"alternatives": ["Translate", "Render"]},
    {"alternatives": ["the speech", "the spoken content", "this audio"]},
    {"alternatives": ["into Chinese", "to Mandarin Chinese"]}
  ]}
}
)";
  return doc;
}

const Registry& default_registry() {
  static const Registry r = load_registry(Json::parse(default_registry_json()));
  return r;
}

}  // namespace forge::templates
