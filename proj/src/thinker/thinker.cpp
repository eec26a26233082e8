#include "thinker/thinker.hpp"

#include <cmath>

#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/rng.hpp"
#include "util/utf8.hpp"

namespace forge::thinker {

using corpus::Range;
using corpus::Role;

std::string_view to_string(Modality m) { return m == Modality::kText ? "text" : "speech"; }

void check_policy(const InterleavePolicy& p) {
  auto prob = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!prob(p.p_user_speech)) throw ArgumentError("p_user_speech must lie in [0, 1]");
  if (!prob(p.p_assistant_segment_speech)) throw ArgumentError("p_assistant_segment_speech must lie in [0, 1]");
  if (!p.final_segment_text) throw ArgumentError("final_segment_text cannot be disabled");
}

Json policy_to_json(const InterleavePolicy& p) {
  Json j;
  j["p_user_speech"] = p.p_user_speech;
  j["p_assistant_segment_speech"] = p.p_assistant_segment_speech;
  j["final_segment_text"] = p.final_segment_text;
  j["user_draw_per_dialogue"] = p.user_draw_per_dialogue;
  return j;
}

namespace {

std::string slice_text(const std::string& text, const std::vector<std::size_t>& bounds, Range r) {
  return text.substr(bounds[r.start], bounds[r.end] - bounds[r.start]);
}

std::vector<std::int64_t> slice_tokens(const corpus::AudioTokenSpan& a, Range r) {
  return {a.token_ids.begin() + r.start, a.token_ids.begin() + r.end};
}

bool masked(const std::vector<corpus::TurnSpan>& masks, std::size_t turn, Range r) {
  for (const auto& m : masks)
    if (m.turn == turn && m.range.overlaps(r)) return true;
  return false;
}

}  // namespace

std::vector<SegmentDescriptor> segment_assistant(const corpus::Turn& turn) {
  if (turn.role != Role::kAssistant) throw CompileError("segment_assistant: turn is not an assistant turn");
  if (turn.alignment.empty())
    throw CompileError("segment_assistant: turn has no alignment; run the upstream aligner first");
  const auto bounds = utf8::boundaries(turn.text);
  const auto n_chars = static_cast<std::int64_t>(bounds.size() - 1);
  std::vector<SegmentDescriptor> out;
  out.reserve(turn.alignment.size());
  for (std::size_t i = 0; i < turn.alignment.size(); ++i) {
    const auto& span = turn.alignment[i];
    if (span.text_range.start < 0 || span.text_range.end > n_chars || span.text_range.empty())
      throw CompileError("segment_assistant: alignment[" + std::to_string(i) + "] text range out of bounds");
    SegmentDescriptor s;
    s.index = i;
    s.text_range = span.text_range;
    s.audio_range = span.audio_range;
    s.text = slice_text(turn.text, bounds, span.text_range);
    if (turn.audio) {
      const auto n_tok = static_cast<std::int64_t>(turn.audio->token_ids.size());
      if (span.audio_range.start < 0 || span.audio_range.end > n_tok || span.audio_range.start > span.audio_range.end)
        throw CompileError("segment_assistant: alignment[" + std::to_string(i) + "] audio range out of bounds");
      s.token_ids = slice_tokens(*turn.audio, span.audio_range);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t record_seed(std::uint64_t master_seed, const std::string& dialogue_id) {
  return derive_seed(master_seed, dialogue_id, "thinker");
}

TrainingSequence interleave_dialogue(const corpus::Dialogue& d, const InterleavePolicy& policy,
                                     std::uint64_t master_seed,
                                     const std::vector<corpus::TurnSpan>& extra_masks) {
  check_policy(policy);
  TrainingSequence seq;
  seq.dialogue_id = d.id;
  seq.master_seed = master_seed;
  seq.record_seed = record_seed(master_seed, d.id);
  Rng rng(seq.record_seed);

  auto masks = corpus::severe_spans(d);
  masks.insert(masks.end(), extra_masks.begin(), extra_masks.end());

  auto need_audio = [&](std::size_t ti) {
    throw CompileError("dialogue " + d.id + " turn " + std::to_string(ti) +
                       ": speech modality drawn but the turn has no audio");
  };

  std::optional<bool> dialogue_user_speech;
  for (std::size_t ti = 0; ti < d.turns.size(); ++ti) {
    const auto& turn = d.turns[ti];
    if (turn.role == Role::kUser) {
      bool speech;
      if (policy.user_draw_per_dialogue) {
        if (!dialogue_user_speech) dialogue_user_speech = rng.bernoulli(policy.p_user_speech);
        speech = *dialogue_user_speech;
      } else {
        speech = rng.bernoulli(policy.p_user_speech);
      }
      Element e;
      e.role = Role::kUser;
      e.origin = {ti, 0};
      e.text_range = Range{0, static_cast<std::int64_t>(utf8::length(turn.text))};
      if (speech) {
        if (!turn.audio) need_audio(ti);
        e.modality = Modality::kSpeech;
        e.audio_range = Range{0, static_cast<std::int64_t>(turn.audio->token_ids.size())};
        e.token_ids = turn.audio->token_ids;
      } else {
        e.modality = Modality::kText;
        e.text = turn.text;
      }
      seq.elements.push_back(std::move(e));
      continue;
    }

    // Unaligned assistant turns compile as a single, necessarily textual, segment.
    std::vector<SegmentDescriptor> segments;
    if (turn.alignment.empty()) {
      SegmentDescriptor whole;
      whole.text_range = Range{0, static_cast<std::int64_t>(utf8::length(turn.text))};
      whole.text = turn.text;
      segments.push_back(std::move(whole));
    } else {
      segments = segment_assistant(turn);
    }
    for (std::size_t si = 0; si < segments.size(); ++si) {
      auto& s = segments[si];
      const bool final_segment = si + 1 == segments.size();
      const bool speech = !final_segment && rng.bernoulli(policy.p_assistant_segment_speech);
      Element e;
      e.role = Role::kAssistant;
      e.origin = {ti, si};
      e.text_range = s.text_range;
      if (speech) {
        if (!turn.audio) need_audio(ti);
        e.modality = Modality::kSpeech;
        e.audio_range = s.audio_range;
        e.token_ids = std::move(s.token_ids);
      } else {
        e.modality = Modality::kText;
        e.text = std::move(s.text);
        e.loss_target = !masked(masks, ti, s.text_range);
      }
      seq.elements.push_back(std::move(e));
    }
  }
  return seq;
}

std::vector<LossTarget> extract_loss_targets(const TrainingSequence& seq) {
  std::vector<LossTarget> out;
  for (const auto& e : seq.elements)
    if (e.loss_target) out.push_back({seq.dialogue_id, e.origin, e.text});
  return out;
}

Json sequence_to_json(const TrainingSequence& seq) {
  Json j;
  j["dialogue_id"] = seq.dialogue_id;
  j["record_seed"] = seq.record_seed;
  Json elements = Json::array();
  for (const auto& e : seq.elements) {
    Json ej;
    ej["role"] = corpus::to_string(e.role);
    ej["modality"] = to_string(e.modality);
    ej["turn"] = e.origin.turn;
    ej["segment"] = e.origin.segment;
    ej["text_range"] = Json::array({e.text_range.start, e.text_range.end});
    if (e.modality == Modality::kText) {
      ej["text"] = e.text;
    } else {
      ej["audio_range"] = Json::array({e.audio_range.start, e.audio_range.end});
      ej["token_ids"] = e.token_ids;
    }
    ej["loss_target"] = e.loss_target;
    elements.push_back(std::move(ej));
  }
  j["elements"] = std::move(elements);
  return j;
}

std::string serialize_sequence(const TrainingSequence& seq) { return sequence_to_json(seq).dump(); }

TrainingSequence sequence_from_json(const Json& j) {
  try {
    TrainingSequence seq;
    seq.dialogue_id = j.at("dialogue_id").get<std::string>();
    seq.record_seed = j.at("record_seed").get<std::uint64_t>();
    for (const auto& ej : j.at("elements")) {
      Element e;
      const auto role = corpus::role_from(ej.at("role").get<std::string>());
      if (!role) throw ParseError("unknown role");
      e.role = *role;
      const auto modality = ej.at("modality").get<std::string>();
      if (modality != "text" && modality != "speech") throw ParseError("unknown modality " + modality);
      e.modality = modality == "text" ? Modality::kText : Modality::kSpeech;
      e.origin = {ej.at("turn").get<std::size_t>(), ej.at("segment").get<std::size_t>()};
      e.text_range = {ej.at("text_range")[0].get<std::int64_t>(), ej.at("text_range")[1].get<std::int64_t>()};
      if (e.modality == Modality::kText) {
        e.text = ej.at("text").get<std::string>();
      } else {
        e.audio_range = {ej.at("audio_range")[0].get<std::int64_t>(), ej.at("audio_range")[1].get<std::int64_t>()};
        e.token_ids = ej.at("token_ids").get<std::vector<std::int64_t>>();
      }
      e.loss_target = ej.at("loss_target").get<bool>();
      seq.elements.push_back(std::move(e));
    }
    return seq;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("training sequence: ") + e.what());
  }
}

}  // namespace forge::thinker
