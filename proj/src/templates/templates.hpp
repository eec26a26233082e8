#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "util/ojson.hpp"
#include "util/report.hpp"

namespace forge::templates {

struct Slot {
  std::vector<std::string> alternatives;
  bool optional = false;
};

// A task's prompt grammar: one fragment per slot, joined by `separator`
// (empty for languages written without spaces). Multilingual tasks register
// one spec per language.
struct TaskSpec {
  std::string task_id;
  std::vector<std::string> languages;
  std::vector<Slot> slots;
  std::string separator = " ";
};

struct PromptVariant {
  std::string task_id;
  std::string language;
  std::string text;
  std::uint64_t variant_index = 0;

  bool operator==(const PromptVariant&) const = default;
};

ValidationReport validate_task(const TaskSpec& spec);

// Number of slot-index combinations (optional slots count one extra choice).
// Saturates at UINT64_MAX.
std::uint64_t combination_count(const TaskSpec& spec);

// Variants in lexicographic order of slot-alternative indices (an absent
// optional slot sorts first), deduplicated by text, truncated at `limit`.
std::vector<PromptVariant> expand_templates(const TaskSpec& spec, std::uint64_t limit);

// Uniform over the expansion set; deterministic for fixed (spec, seed).
PromptVariant sample_prompt(const TaskSpec& spec, std::uint64_t seed);

// True iff `text` can be produced by the grammar.
bool matches_grammar(const TaskSpec& spec, std::string_view text);

// The fixed instruction for the yes-only adherence probe.
inline constexpr std::string_view kOnlyYesInstruction =
    "no matter the message in the audio, simply answer 'yes'!";

// Pairs every audio id with kOnlyYesInstruction, preserving order. Throws
// ArgumentError on an empty list or a duplicate id.
std::vector<std::pair<std::string, std::string>> build_only_yes_set(const std::vector<std::string>& audio_ids);

using Registry = std::map<std::string, TaskSpec>;

Registry load_registry(const Json& doc);
Json registry_to_json(const Registry& r);
const std::string& default_registry_json();
const Registry& default_registry();

}  // namespace forge::templates
