#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "util/ojson.hpp"

namespace forge::schedule {

enum class ParamGroup { kAudioEncoder, kAudioAdapter, kThinker, kTalker };
std::string_view to_string(ParamGroup g);

enum class StageId { kS1GeneralAudio, kS2AlignmentCpt, kS3InstructionFt, kPostTraining, kTalkerTraining, kEndToEnd };
std::string_view to_string(StageId s);
// Accepts the full name ("s1_general_audio") or the short form ("s1").
std::optional<StageId> stage_from(std::string_view s);

enum class Unit { kTokens, kHours, kSamples };
std::string_view to_string(Unit u);

struct Phase {
  double fraction = 1.0;
  std::set<ParamGroup> trainable;
  std::optional<double> lr;  // nullopt when the source gives no value
};

// A declared quantity. Token entries may name the data classes whose hours
// back them; budget_check re-derives the tokens from those hours.
struct BudgetEntry {
  std::string name;
  double amount = 0;
  Unit unit = Unit::kTokens;
  std::vector<std::string> hour_classes;
};

struct StageSpec {
  StageId id;
  std::optional<std::int64_t> total_steps;
  std::vector<Phase> phases;
  std::vector<BudgetEntry> budget;
  // Hours per data class as declared for this stage.
  std::map<std::string, double> class_hours;
};

using Plan = std::vector<StageSpec>;

Plan build_default_plan();
const StageSpec& find_stage(const Plan& plan, StageId id);

// Throws ArgumentError if fractions do not sum to 1, a declared lr is <= 0,
// or total_steps < 1.
void check_stage(const StageSpec& s);

struct PhaseRange {
  std::int64_t first = 1;  // inclusive; first > last means the phase is empty
  std::int64_t last = 0;
};

// Step ranges of each phase for a run of `total_steps`.
std::vector<PhaseRange> phase_ranges(const StageSpec& s, std::int64_t total_steps);

struct StepDirective {
  StageId stage;
  std::int64_t step = 0;
  std::size_t phase = 0;
  std::set<ParamGroup> trainable;
  std::optional<double> lr;
  std::map<std::string, double> budget_remaining;
};

// `total_steps` overrides the stage's own count. Throws ArgumentError for a
// step outside [1, total] or a stage without a step count.
StepDirective directive_at(const Plan& plan, StageId stage, std::int64_t step,
                           std::optional<std::int64_t> total_steps = std::nullopt);

struct ClassStats {
  std::optional<double> hours;
  std::optional<double> tokens;
};
using CorpusStats = std::map<std::string, ClassStats>;

CorpusStats stats_from_json(const Json& j);
Json stats_to_json(const CorpusStats& s);

struct BudgetLine {
  std::string stage;
  std::string entry;
  double declared = 0;
  std::optional<double> derived;
  std::optional<double> relative_error;
  std::vector<std::string> missing;
  bool pass = false;
};

struct BudgetReport {
  std::vector<BudgetLine> lines;
  bool all_pass() const;
};

inline constexpr double kBudgetTolerance = 0.02;

BudgetReport budget_check(const Plan& plan, const CorpusStats& stats);
Json budget_report_to_json(const BudgetReport& r);

Json plan_to_json(const Plan& p);
Plan plan_from_json(const Json& j);
Json directive_to_json(const StepDirective& d);

}  // namespace forge::schedule
