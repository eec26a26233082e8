#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"
#include "util/ojson.hpp"

namespace forge::thinker {

enum class Modality { kText, kSpeech };
std::string_view to_string(Modality m);

struct InterleavePolicy {
  double p_user_speech = 0.5;
  double p_assistant_segment_speech = 0.5;
  bool final_segment_text = true;  // must stay true
  // One user-side draw per dialogue instead of one per user turn.
  bool user_draw_per_dialogue = false;
};

// Throws ArgumentError on probabilities outside [0,1] or a disabled final-text rule.
void check_policy(const InterleavePolicy& p);
Json policy_to_json(const InterleavePolicy& p);

struct Origin {
  std::size_t turn = 0;
  std::size_t segment = 0;
  bool operator==(const Origin&) const = default;
};

struct Element {
  Modality modality = Modality::kText;
  corpus::Role role = corpus::Role::kUser;
  Origin origin;
  corpus::Range text_range;   // scalar offsets into the turn text
  corpus::Range audio_range;  // token offsets into the turn audio (speech only)
  std::string text;           // text payload (text modality)
  std::vector<std::int64_t> token_ids;  // speech payload
  bool loss_target = false;
};

struct TrainingSequence {
  std::string dialogue_id;
  std::uint64_t master_seed = 0;
  std::uint64_t record_seed = 0;
  std::vector<Element> elements;
};

struct SegmentDescriptor {
  std::size_t index = 0;
  corpus::Range text_range;
  corpus::Range audio_range;
  std::string text;
  std::vector<std::int64_t> token_ids;  // empty when the turn has no audio
};

// One descriptor per alignment span. Throws CompileError for a user turn or an
// empty alignment.
std::vector<SegmentDescriptor> segment_assistant(const corpus::Turn& turn);

// Seed for a dialogue's draws; independent of position and worker count.
std::uint64_t record_seed(std::uint64_t master_seed, const std::string& dialogue_id);

// Compiles one dialogue. Assistant text overlapping a severe-contradiction span
// (or any span in `extra_masks`) is kept but not used as a loss target.
// Throws CompileError when speech is drawn for a turn without audio.
TrainingSequence interleave_dialogue(const corpus::Dialogue& d, const InterleavePolicy& policy,
                                     std::uint64_t master_seed,
                                     const std::vector<corpus::TurnSpan>& extra_masks = {});

struct LossTarget {
  std::string dialogue_id;
  Origin origin;
  std::string text;
  bool operator==(const LossTarget&) const = default;
};

std::vector<LossTarget> extract_loss_targets(const TrainingSequence& seq);

Json sequence_to_json(const TrainingSequence& seq);
std::string serialize_sequence(const TrainingSequence& seq);
TrainingSequence sequence_from_json(const Json& j);

}  // namespace forge::thinker
