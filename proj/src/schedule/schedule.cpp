#include "schedule/schedule.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "corpus/corpus.hpp"
#include "util/error.hpp"

namespace forge::schedule {

namespace {
constexpr std::array<std::string_view, 4> kGroups = {"audio_encoder", "audio_adapter", "thinker", "talker"};
constexpr std::array<std::string_view, 6> kStages = {"s1_general_audio", "s2_alignment_cpt", "s3_instruction_ft",
                                                     "post_training",    "talker_training",  "end_to_end"};
constexpr std::array<std::string_view, 6> kStageShort = {"s1", "s2", "s3", "post", "talker", "e2e"};
constexpr std::array<std::string_view, 3> kUnits = {"tokens", "hours", "samples"};

std::optional<ParamGroup> group_from(std::string_view s) {
  for (std::size_t i = 0; i < kGroups.size(); ++i)
    if (kGroups[i] == s) return static_cast<ParamGroup>(i);
  return std::nullopt;
}

std::optional<Unit> unit_from(std::string_view s) {
  for (std::size_t i = 0; i < kUnits.size(); ++i)
    if (kUnits[i] == s) return static_cast<Unit>(i);
  return std::nullopt;
}
}  // namespace

std::string_view to_string(ParamGroup g) { return kGroups[static_cast<std::size_t>(g)]; }
std::string_view to_string(StageId s) { return kStages[static_cast<std::size_t>(s)]; }
std::string_view to_string(Unit u) { return kUnits[static_cast<std::size_t>(u)]; }

std::optional<StageId> stage_from(std::string_view s) {
  for (std::size_t i = 0; i < kStages.size(); ++i)
    if (kStages[i] == s || kStageShort[i] == s) return static_cast<StageId>(i);
  return std::nullopt;
}

Plan build_default_plan() {
  using G = ParamGroup;
  const std::set<G> audio_and_thinker = {G::kAudioEncoder, G::kAudioAdapter, G::kThinker};
  Plan p;

  StageSpec s1{StageId::kS1GeneralAudio};
  s1.phases = {{0.30, {G::kAudioAdapter}, 4e-5}, {0.70, {G::kAudioEncoder}, 4e-5}};
  s1.class_hours = {{"asr", 256'000}, {"audio_caption", 64'000}};
  s1.budget = {{"speech_tokens", 14.4e9, Unit::kTokens, {"asr", "audio_caption"}}};
  p.push_back(s1);

  StageSpec s2{StageId::kS2AlignmentCpt};
  s2.phases = {{1.0, audio_and_thinker, 1e-5}};
  s2.class_hours = {{"instruction_augmented", 2'560'000},
                    {"dialogue_structure", 480'000},
                    {"real_life_conversation", 100'000},
                    {"audio_qa", 64'000}};
  s2.budget = {{"text_tokens", 144e9, Unit::kTokens, {}},
               {"audio_tokens", 144e9, Unit::kTokens,
                {"instruction_augmented", "dialogue_structure", "real_life_conversation", "audio_qa"}}};
  p.push_back(s2);

  StageSpec s3{StageId::kS3InstructionFt};
  s3.phases = {{1.0, audio_and_thinker, 2e-6}};
  s3.class_hours = {{"multitask_instruction", 320'000}};
  s3.budget = {{"multitask_instruction_hours", 320'000, Unit::kHours, {}},
               {"pure_text_tokens", 12.8e9, Unit::kTokens, {}}};
  p.push_back(s3);

  StageSpec post{StageId::kPostTraining};
  post.phases = {{1.0, audio_and_thinker, std::nullopt}};
  post.budget = {{"dialogue_samples", 6e6, Unit::kSamples, {}},
                 {"authentic_dialogue_samples", 4e6, Unit::kSamples, {}},
                 {"constructed_dialogue_samples", 2e6, Unit::kSamples, {}},
                 {"text_instruction_samples", 12e6, Unit::kSamples, {}}};
  p.push_back(post);

  StageSpec talker{StageId::kTalkerTraining};
  talker.phases = {{1.0, {G::kTalker}, std::nullopt}};
  talker.class_hours = {{"multilingual_speech", 2'710'000}};
  talker.budget = {{"multilingual_speech_hours", 2'710'000, Unit::kHours, {}}};
  p.push_back(talker);

  StageSpec e2e{StageId::kEndToEnd};
  e2e.phases = {{1.0, {G::kAudioEncoder, G::kAudioAdapter, G::kThinker, G::kTalker}, std::nullopt}};
  e2e.budget = post.budget;  // same data distribution as post-training
  p.push_back(e2e);

  return p;
}

const StageSpec& find_stage(const Plan& plan, StageId id) {
  for (const auto& s : plan)
    if (s.id == id) return s;
  throw ArgumentError("plan has no stage " + std::string(to_string(id)));
}

void check_stage(const StageSpec& s) {
  const std::string name(to_string(s.id));
  if (s.phases.empty()) throw ArgumentError(name + ": no phases");
  double sum = 0;
  for (const auto& ph : s.phases) {
    if (!(ph.fraction >= 0.0)) throw ArgumentError(name + ": negative phase fraction");
    if (ph.lr && !(*ph.lr > 0.0)) throw ArgumentError(name + ": learning rate must be > 0");
    sum += ph.fraction;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError(name + ": phase fractions sum to " + std::to_string(sum));
  if (s.total_steps && *s.total_steps < 1) throw ArgumentError(name + ": total_steps must be >= 1");
}

std::vector<PhaseRange> phase_ranges(const StageSpec& s, std::int64_t total_steps) {
  check_stage(s);
  if (total_steps < 1) throw ArgumentError("total_steps must be >= 1");
  std::vector<std::int64_t> bound(s.phases.size());
  double cum = 0;
  for (std::size_t i = 0; i < s.phases.size(); ++i) {
    cum += s.phases[i].fraction;
    // 1e-9 absorbs representation error, e.g. 0.3 * 10 = 2.9999999999999996.
    bound[i] = std::min<std::int64_t>(total_steps, static_cast<std::int64_t>(std::floor(cum * total_steps + 1e-9)));
  }
  bound.back() = total_steps;
  // A warm-up phase is never silently skipped, unless the run is too short
  // to hold two phases at all.
  if (s.phases.size() > 1 && s.phases.front().fraction > 0 && bound.front() == 0 && total_steps >= 2)
    bound.front() = 1;
  for (std::size_t i = 1; i < bound.size(); ++i) bound[i] = std::max(bound[i], bound[i - 1]);

  std::vector<PhaseRange> out(s.phases.size());
  std::int64_t prev = 0;
  for (std::size_t i = 0; i < bound.size(); ++i) {
    out[i] = {prev + 1, bound[i]};
    prev = bound[i];
  }
  return out;
}

StepDirective directive_at(const Plan& plan, StageId stage, std::int64_t step, std::optional<std::int64_t> total_steps) {
  const auto& s = find_stage(plan, stage);
  const auto total = total_steps ? total_steps : s.total_steps;
  if (!total)
    throw ArgumentError(std::string(to_string(stage)) + " has no step count; pass total_steps explicitly");
  if (step < 1 || step > *total)
    throw ArgumentError("step " + std::to_string(step) + " outside [1, " + std::to_string(*total) + "]");
  const auto ranges = phase_ranges(s, *total);
  StepDirective d{stage, step};
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (step >= ranges[i].first && step <= ranges[i].last) {
      d.phase = i;
      d.trainable = s.phases[i].trainable;
      d.lr = s.phases[i].lr;
      break;
    }
  }
  // Linear consumption: each step uses an equal share of every declared budget.
  const double left = static_cast<double>(*total - step) / static_cast<double>(*total);
  for (const auto& b : s.budget) d.budget_remaining[b.name] = b.amount * left;
  return d;
}

CorpusStats stats_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("stats: expected an object");
  const Json& classes = j.contains("classes") ? j["classes"] : j;
  if (!classes.is_object()) throw ParseError("stats: `classes` must be an object");
  CorpusStats out;
  for (auto it = classes.begin(); it != classes.end(); ++it) {
    ClassStats c;
    if (it.value().is_number()) {
      c.hours = it.value().get<double>();
    } else if (it.value().is_object()) {
      if (it.value().contains("hours")) c.hours = it.value()["hours"].get<double>();
      if (it.value().contains("tokens")) c.tokens = it.value()["tokens"].get<double>();
    } else {
      throw ParseError("stats: class `" + it.key() + "` must be a number or an object");
    }
    out.emplace(it.key(), c);
  }
  return out;
}

Json stats_to_json(const CorpusStats& s) {
  Json classes = Json::object();
  for (const auto& [name, c] : s) {
    Json cj = Json::object();
    if (c.hours) cj["hours"] = *c.hours;
    if (c.tokens) cj["tokens"] = *c.tokens;
    classes[name] = std::move(cj);
  }
  return Json{{"classes", std::move(classes)}};
}

bool BudgetReport::all_pass() const {
  return std::all_of(lines.begin(), lines.end(), [](const BudgetLine& l) { return l.pass; });
}

BudgetReport budget_check(const Plan& plan, const CorpusStats& stats) {
  BudgetReport r;
  for (const auto& s : plan) {
    for (const auto& b : s.budget) {
      if (b.unit != Unit::kTokens || b.hour_classes.empty()) continue;
      BudgetLine line;
      line.stage = to_string(s.id);
      line.entry = b.name;
      line.declared = b.amount;
      double derived = 0;
      for (const auto& cls : b.hour_classes) {
        auto it = stats.find(cls);
        if (it == stats.end() || (!it->second.hours && !it->second.tokens)) {
          line.missing.push_back(cls);
          continue;
        }
        derived += it->second.tokens ? *it->second.tokens
                                     : static_cast<double>(corpus::tokens_for_hours(*it->second.hours));
      }
      if (line.missing.empty()) {
        line.derived = derived;
        line.relative_error = std::abs(derived - b.amount) / b.amount;
        line.pass = *line.relative_error <= kBudgetTolerance;
      }
      r.lines.push_back(std::move(line));
    }
  }
  return r;
}

Json budget_report_to_json(const BudgetReport& r) {
  Json lines = Json::array();
  for (const auto& l : r.lines) {
    Json j;
    j["stage"] = l.stage;
    j["entry"] = l.entry;
    j["declared"] = l.declared;
    j["derived"] = l.derived ? Json(*l.derived) : Json(nullptr);
    j["relative_error"] = l.relative_error ? Json(*l.relative_error) : Json(nullptr);
    j["missing"] = l.missing;
    j["pass"] = l.pass;
    lines.push_back(std::move(j));
  }
  return Json{{"tolerance", kBudgetTolerance}, {"all_pass", r.all_pass()}, {"lines", std::move(lines)}};
}

Json plan_to_json(const Plan& p) {
  Json stages = Json::array();
  for (const auto& s : p) {
    Json sj;
    sj["stage_id"] = to_string(s.id);
    sj["total_steps"] = s.total_steps ? Json(*s.total_steps) : Json("unspecified");
    Json phases = Json::array();
    for (const auto& ph : s.phases) {
      Json pj;
      pj["fraction"] = ph.fraction;
      Json groups = Json::array();
      for (auto g : ph.trainable) groups.push_back(to_string(g));
      pj["trainable"] = std::move(groups);
      pj["lr"] = ph.lr ? Json(*ph.lr) : Json("unspecified");
      phases.push_back(std::move(pj));
    }
    sj["phases"] = std::move(phases);
    Json budget = Json::array();
    for (const auto& b : s.budget) {
      Json bj;
      bj["name"] = b.name;
      bj["amount"] = b.amount;
      bj["unit"] = to_string(b.unit);
      bj["hour_classes"] = b.hour_classes;
      budget.push_back(std::move(bj));
    }
    sj["budget"] = std::move(budget);
    Json hours = Json::object();
    for (const auto& [k, v] : s.class_hours) hours[k] = v;
    sj["class_hours"] = std::move(hours);
    stages.push_back(std::move(sj));
  }
  return Json{{"stages", std::move(stages)}};
}

Plan plan_from_json(const Json& j) {
  try {
    Plan p;
    for (const auto& sj : j.at("stages")) {
      auto id = stage_from(sj.at("stage_id").get<std::string>());
      if (!id) throw ParseError("plan: unknown stage " + sj.at("stage_id").dump());
      StageSpec s{*id};
      if (sj.at("total_steps").is_number_integer()) s.total_steps = sj["total_steps"].get<std::int64_t>();
      for (const auto& pj : sj.at("phases")) {
        Phase ph;
        ph.fraction = pj.at("fraction").get<double>();
        for (const auto& g : pj.at("trainable")) {
          auto group = group_from(g.get<std::string>());
          if (!group) throw ParseError("plan: unknown parameter group " + g.dump());
          ph.trainable.insert(*group);
        }
        if (pj.at("lr").is_number()) ph.lr = pj["lr"].get<double>();
        s.phases.push_back(std::move(ph));
      }
      for (const auto& bj : sj.at("budget")) {
        BudgetEntry b;
        b.name = bj.at("name").get<std::string>();
        b.amount = bj.at("amount").get<double>();
        auto unit = unit_from(bj.at("unit").get<std::string>());
        if (!unit) throw ParseError("plan: unknown unit " + bj["unit"].dump());
        b.unit = *unit;
        b.hour_classes = bj.at("hour_classes").get<std::vector<std::string>>();
        s.budget.push_back(std::move(b));
      }
      for (auto it = sj.at("class_hours").begin(); it != sj["class_hours"].end(); ++it)
        s.class_hours[it.key()] = it.value().get<double>();
      check_stage(s);
      p.push_back(std::move(s));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
}

Json directive_to_json(const StepDirective& d) {
  Json j;
  j["stage"] = to_string(d.stage);
  j["step"] = d.step;
  j["phase"] = d.phase;
  Json groups = Json::array();
  for (auto g : d.trainable) groups.push_back(to_string(g));
  j["trainable"] = std::move(groups);
  j["lr"] = d.lr ? Json(*d.lr) : Json("unspecified");
  Json budget = Json::object();
  for (const auto& [k, v] : d.budget_remaining) budget[k] = v;
  j["budget_remaining"] = std::move(budget);
  return j;
}

}  // namespace forge::schedule
