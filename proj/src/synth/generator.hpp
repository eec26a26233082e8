#pragma once

#include <cstdint>
#include <vector>

#include "corpus/corpus.hpp"
#include "util/ojson.hpp"

namespace forge::synth {

struct GeneratorOptions {
  std::size_t count = 100;
  std::uint64_t seed = 0;
  int min_turns = 2;
  int max_turns = 6;
  int min_segments = 1;  // sub-sentences per turn
  int max_segments = 4;
  std::size_t speakers = 0;   // 0: one per eight dialogues, at least four
  double p_audio = 1.0;       // per turn
  double p_caption = 0.5;     // per turn with audio
  double p_zh = 0.3;
  double p_correctable = 0.1;
  double p_severe = 0.1;
  double p_missing_context = 0.1;
  // Missing-context dialogues drop their opening user turn, leaving a fragment
  // that only validates after context completion.
  bool assistant_initial_fragments = false;
  // Restrict every dialogue to one source; -1 draws uniformly.
  int source = -1;
};

void check_options(const GeneratorOptions& o);
GeneratorOptions options_from_json(const Json& j, GeneratorOptions base = {});
Json options_to_json(const GeneratorOptions& o);

// Dialogue i depends only on (seed, i), so the output is the same for any
// worker count and any prefix of a longer run.
corpus::Dialogue generate_dialogue(const GeneratorOptions& o, std::size_t i);
std::vector<corpus::Dialogue> generate(const GeneratorOptions& o, unsigned jobs = 1);

}  // namespace forge::synth
