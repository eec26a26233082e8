#include "cleaning/cleaning.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/parallel.hpp"
#include "util/utf8.hpp"

namespace forge::cleaning {

using corpus::FlagKind;
using corpus::Range;

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::kLogicCorrection: return "logic_correction";
    case Branch::kInformationPreservation: return "information_preservation";
    case Branch::kContextCompletion: return "context_completion";
    case Branch::kPassthrough: return "passthrough";
  }
  return "passthrough";
}

Branch route(const corpus::Dialogue& d) {
  if (d.has_flag(FlagKind::kLogicContradictionSevere)) return Branch::kInformationPreservation;
  if (d.has_flag(FlagKind::kMissingContext)) return Branch::kContextCompletion;
  if (d.has_flag(FlagKind::kLogicContradictionCorrectable)) return Branch::kLogicCorrection;
  return Branch::kPassthrough;
}

namespace {

std::string call_id(std::uint64_t seed, const std::string& dialogue_id, const std::string& what) {
  std::ostringstream os;
  os << std::hex << derive_seed(seed, dialogue_id, what);
  return os.str();
}

struct Deferred {
  std::string reason;
  int attempts;
};

// Runs fn up to 1 + retries times. Returns the attempt count on success.
template <class Fn>
int with_retries(int retries, Fn&& fn, std::optional<Deferred>& failure) {
  std::string last;
  for (int attempt = 1; attempt <= retries + 1; ++attempt) {
    try {
      fn();
      return attempt;
    } catch (const ClientError& e) {
      last = e.what();
    }
  }
  failure = Deferred{last, retries + 1};
  return retries + 1;
}

CleaningOutcome deferred_outcome(const corpus::Dialogue& d, Branch b, Deferred f) {
  CleaningOutcome o;
  o.branch = b;
  o.dialogue = d;
  o.deferred = true;
  o.deferred_reason = std::move(f.reason);
  o.attempts = f.attempts;
  return o;
}

CleaningOutcome rejected_outcome(const corpus::Dialogue& d, Branch b, ValidationReport r) {
  CleaningOutcome o;
  o.branch = b;
  o.dialogue = d;
  o.rejected = true;
  o.rejection = std::move(r);
  return o;
}

void set_single_span_alignment(corpus::Turn& t) {
  t.alignment.clear();
  const auto n = static_cast<std::int64_t>(utf8::length(t.text));
  if (n == 0) return;
  const auto tokens = t.audio ? static_cast<std::int64_t>(t.audio->token_ids.size()) : 0;
  t.alignment.push_back({Range{0, n}, Range{0, tokens}, 0});
}

void drop_flags(corpus::Dialogue& d, FlagKind kind) {
  std::erase_if(d.quality_flags, [kind](const corpus::QualityFlag& f) { return f.kind == kind; });
}

}  // namespace

CleaningOutcome apply_logic_correction(const corpus::Dialogue& d, CorrectorClient& corrector, SynthClient& synth,
                                       std::uint64_t seed, const CleaningOptions& opts) {
  const Branch branch = Branch::kLogicCorrection;
  std::vector<Range> spans;
  for (const auto& f : d.quality_flags)
    if (f.kind == FlagKind::kLogicContradictionCorrectable) spans.insert(spans.end(), f.spans.begin(), f.spans.end());
  std::set<std::size_t> flagged;
  if (spans.empty()) {
    for (std::size_t i = 0; i < d.turns.size(); ++i)
      if (d.turns[i].role == corpus::Role::kAssistant) flagged.insert(i);
  } else {
    for (const auto& ts : corpus::project_to_turns(d, spans)) flagged.insert(ts.turn);
  }

  // Gather every client result before mutating anything.
  struct Staged {
    std::size_t turn;
    std::string text;
    corpus::AudioTokenSpan audio;
  };
  std::vector<Staged> staged;
  CleaningOutcome out;
  std::optional<Deferred> failure;
  for (auto ti : flagged) {
    const auto& turn = d.turns[ti];
    Staged s{ti, {}, {}};
    const std::string where = "turn" + std::to_string(ti);
    int a = with_retries(opts.retries, [&] { s.text = corrector.correct(turn.text, d); }, failure);
    if (failure) return deferred_outcome(d, branch, *failure);
    out.provenance.push_back({call_id(seed, d.id, "correct/" + where), corrector.name(), "correct",
                              static_cast<std::int64_t>(ti), "turns[" + std::to_string(ti) + "].text", a});
    a = with_retries(opts.retries, [&] { s.audio = synth.synthesize(s.text, turn.speaker_id); }, failure);
    if (failure) return deferred_outcome(d, branch, *failure);
    out.provenance.push_back({call_id(seed, d.id, "synthesize/" + where), synth.name(), "synthesize",
                              static_cast<std::int64_t>(ti), "turns[" + std::to_string(ti) + "].audio", a});
    staged.push_back(std::move(s));
  }

  out.branch = branch;
  out.dialogue = d;
  for (auto& s : staged) {
    auto& t = out.dialogue.turns[s.turn];
    t.text = std::move(s.text);
    t.audio = std::move(s.audio);
    set_single_span_alignment(t);
  }
  drop_flags(out.dialogue, FlagKind::kLogicContradictionCorrectable);
  if (auto r = corpus::validate_dialogue(out.dialogue); !r.empty()) return rejected_outcome(d, branch, std::move(r));
  return out;
}

CleaningOutcome apply_masking(const corpus::Dialogue& d) {
  bool any = false;
  for (const auto& f : d.quality_flags) {
    if (f.kind != FlagKind::kLogicContradictionSevere) continue;
    any = true;
    if (f.spans.empty()) throw ArgumentError("dialogue " + d.id + ": severe contradiction flag carries no spans");
  }
  if (!any) throw ArgumentError("dialogue " + d.id + ": no severe contradiction flag to mask");
  CleaningOutcome o;
  o.branch = Branch::kInformationPreservation;
  o.dialogue = d;
  o.masked_spans = corpus::severe_spans(d);
  return o;
}

CleaningOutcome apply_context_completion(const corpus::Dialogue& d, CorrectorClient& corrector, SynthClient& synth,
                                         std::uint64_t seed, const CleaningOptions& opts) {
  const Branch branch = Branch::kContextCompletion;
  std::vector<corpus::Turn> added;
  std::optional<Deferred> failure;
  const int attempts = with_retries(opts.retries, [&] { added = corrector.backfill(d); }, failure);
  if (failure) return deferred_outcome(d, branch, *failure);

  CleaningOutcome out;
  out.branch = branch;
  out.dialogue = d;
  if (added.empty()) return out;

  out.provenance.push_back({call_id(seed, d.id, "backfill"), corrector.name(), "backfill", -1,
                            "turns[0.." + std::to_string(added.size()) + ")", attempts});
  if (opts.synthesize_backfill) {
    for (std::size_t i = 0; i < added.size(); ++i) {
      auto& t = added[i];
      const int a = with_retries(opts.retries, [&] { t.audio = synth.synthesize(t.text, t.speaker_id); }, failure);
      if (failure) return deferred_outcome(d, branch, *failure);
      set_single_span_alignment(t);
      out.provenance.push_back({call_id(seed, d.id, "synthesize/backfill" + std::to_string(i)), synth.name(),
                                "synthesize", static_cast<std::int64_t>(i),
                                "turns[" + std::to_string(i) + "].audio", a});
    }
  }

  std::int64_t shift = 0;
  for (const auto& t : added) shift += static_cast<std::int64_t>(utf8::length(t.text));
  out.dialogue.turns.insert(out.dialogue.turns.begin(), added.begin(), added.end());
  drop_flags(out.dialogue, FlagKind::kMissingContext);
  for (auto& f : out.dialogue.quality_flags)
    for (auto& s : f.spans) s = Range{s.start + shift, s.end + shift};

  if (auto r = corpus::validate_dialogue(out.dialogue); !r.empty()) return rejected_outcome(d, branch, std::move(r));
  return out;
}

CleaningOutcome clean_dialogue(const corpus::Dialogue& d, CorrectorClient& corrector, SynthClient& synth,
                               std::uint64_t seed, const CleaningOptions& opts) {
  switch (route(d)) {
    case Branch::kInformationPreservation: return apply_masking(d);
    case Branch::kContextCompletion: return apply_context_completion(d, corrector, synth, seed, opts);
    case Branch::kLogicCorrection: return apply_logic_correction(d, corrector, synth, seed, opts);
    case Branch::kPassthrough: break;
  }
  CleaningOutcome o;
  o.dialogue = d;
  return o;
}

std::vector<CleaningOutcome> clean_corpus(const std::vector<corpus::Dialogue>& dialogues,
                                          CorrectorClient& corrector, SynthClient& synth, std::uint64_t seed,
                                          const CleaningOptions& opts, unsigned jobs) {
  std::vector<CleaningOutcome> out(dialogues.size());
  parallel_for(dialogues.size(), jobs, [&](std::size_t i) {
    try {
      out[i] = clean_dialogue(dialogues[i], corrector, synth, seed, opts);
    } catch (const ArgumentError& e) {
      out[i] = rejected_outcome(dialogues[i], route(dialogues[i]), {{"quality_flags", e.what()}});
    }
  });
  return out;
}

Json outcome_summary_json(const CleaningOutcome& o) {
  Json j;
  j["dialogue_id"] = o.dialogue.id;
  j["branch"] = to_string(o.branch);
  j["status"] = o.deferred ? "deferred" : o.rejected ? "rejected" : "ok";
  Json masked = Json::array();
  for (const auto& m : o.masked_spans) masked.push_back(Json::array({m.turn, m.range.start, m.range.end}));
  j["masked_spans"] = std::move(masked);
  Json prov = Json::array();
  for (const auto& p : o.provenance) {
    Json pj;
    pj["call_id"] = p.call_id;
    pj["client"] = p.client;
    pj["operation"] = p.operation;
    pj["turn"] = p.turn;
    pj["field"] = p.field;
    pj["attempts"] = p.attempts;
    prov.push_back(std::move(pj));
  }
  j["provenance"] = std::move(prov);
  if (o.deferred) j["retry"] = Json{{"attempts", o.attempts}, {"last_error", o.deferred_reason}};
  if (o.rejected) {
    Json rej = Json::array();
    for (const auto& v : o.rejection) rej.push_back(Json{{"path", v.path}, {"message", v.message}});
    j["rejection"] = std::move(rej);
  }
  return j;
}

}  // namespace forge::cleaning
