#include <doctest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "synth/generator.hpp"
#include "thinker/thinker.hpp"
#include "util/error.hpp"

using namespace forge;
using namespace forge::thinker;
using corpus::Dialogue;
using corpus::FlagKind;
using corpus::Role;
using test::assistant;
using test::dialogue;
using test::user;

namespace {

InterleavePolicy policy(double pu, double pa) {
  InterleavePolicy p;
  p.p_user_speech = pu;
  p.p_assistant_segment_speech = pa;
  return p;
}

std::vector<Modality> modalities(const TrainingSequence& s, std::size_t turn) {
  std::vector<Modality> out;
  for (const auto& e : s.elements)
    if (e.origin.turn == turn) out.push_back(e.modality);
  return out;
}

std::vector<Dialogue> random_corpus(std::size_t n, std::uint64_t seed, int max_segments = 5) {
  synth::GeneratorOptions o;
  o.count = n;
  o.seed = seed;
  o.max_segments = max_segments;
  return synth::generate(o);
}

// Severe spans per turn, recomputed here from the dialogue-level ranges.
bool oracle_masked(const Dialogue& d, std::size_t turn, corpus::Range local) {
  std::int64_t start = 0;
  for (std::size_t i = 0; i < turn; ++i) start += static_cast<std::int64_t>(utf8::length(d.turns[i].text));
  const std::int64_t g0 = start + local.start, g1 = start + local.end;
  for (const auto& f : d.quality_flags) {
    if (f.kind != FlagKind::kLogicContradictionSevere) continue;
    for (const auto& s : f.spans)
      if (s.start < g1 && g0 < s.end) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("segment_assistant") {
  const auto t = assistant({"One. ", "Two. ", "Three."});
  const auto segs = segment_assistant(t);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].text + segs[1].text + segs[2].text == t.text);
  CHECK(segs[1].text == "Two. ");
  CHECK(segs[1].token_ids.size() == 10);
  CHECK(segs[2].index == 2);

  const auto single = assistant({"Whole turn."});
  const auto one = segment_assistant(single);
  REQUIRE(one.size() == 1);
  CHECK(one[0].text == single.text);
  CHECK(one[0].token_ids == single.audio->token_ids);

  auto unaligned = single;
  unaligned.alignment.clear();
  CHECK_THROWS_AS(segment_assistant(unaligned), CompileError);
  CHECK_THROWS_AS(segment_assistant(user("hi")), CompileError);
}

TEST_CASE("segment text slices concatenate to the turn text") {
  for (const auto& d : random_corpus(300, 4))
    for (const auto& t : d.turns) {
      if (t.role != Role::kAssistant) continue;
      std::string joined;
      for (const auto& s : segment_assistant(t)) joined += s.text;
      CHECK(joined == t.text);
    }
}

TEST_CASE("p_assistant = 1: every segment but the last is speech") {
  const auto d = dialogue("a", {user("Q?"), assistant({"One. ", "Two. ", "Three."})});
  const auto s = interleave_dialogue(d, policy(0.5, 1.0), 1);
  CHECK(modalities(s, 1) == std::vector<Modality>{Modality::kSpeech, Modality::kSpeech, Modality::kText});
  const auto targets = extract_loss_targets(s);
  REQUIRE(targets.size() == 1);
  CHECK(targets[0].text == "Three.");
  CHECK(targets[0].origin == Origin{1, 2});
}

TEST_CASE("p_user = 0: all user turns are text") {
  for (const auto& d : random_corpus(200, 5)) {
    const auto s = interleave_dialogue(d, policy(0.0, 0.5), 3);
    for (const auto& e : s.elements)
      if (e.role == Role::kUser) CHECK(e.modality == Modality::kText);
  }
}

TEST_CASE("all-text compile reproduces the turn texts and targets every assistant element") {
  for (const auto& d : random_corpus(200, 6)) {
    const auto s = interleave_dialogue(d, policy(0.0, 0.0), 3);
    std::vector<std::string> rebuilt(d.turns.size());
    for (const auto& e : s.elements) rebuilt[e.origin.turn] += e.text;
    for (std::size_t i = 0; i < d.turns.size(); ++i) CHECK(rebuilt[i] == d.turns[i].text);
    std::size_t assistant_elems = 0;
    for (const auto& e : s.elements) assistant_elems += e.role == Role::kAssistant && !oracle_masked(d, e.origin.turn, e.text_range);
    CHECK(extract_loss_targets(s).size() == assistant_elems);
  }
}

TEST_CASE("user speech fraction over 10,000 single-turn dialogues") {
  int speech = 0;
  const int n = 10'000;
  for (int i = 0; i < n; ++i) {
    const auto d = dialogue("single-" + std::to_string(i), {user("Hello.")});
    const auto s = interleave_dialogue(d, policy(0.5, 0.5), 2024);
    speech += s.elements[0].modality == Modality::kSpeech;
  }
  const double frac = static_cast<double>(speech) / n;
  CHECK(frac >= 0.48);
  CHECK(frac <= 0.52);
  CHECK(std::abs(frac - 0.5) <= 3 * std::sqrt(0.25 / n));
}

TEST_CASE("assistant segment speech fraction converges to the policy") {
  for (double p : {0.2, 0.5, 0.8}) {
    long draws = 0, speech = 0;
    for (const auto& d : random_corpus(2000, 8)) {
      const auto s = interleave_dialogue(d, policy(0.5, p), 17);
      for (const auto& e : s.elements) {
        if (e.role != Role::kAssistant) continue;
        const auto& t = d.turns[e.origin.turn];
        if (e.origin.segment + 1 == t.alignment.size()) continue;  // forced text, no draw
        ++draws;
        speech += e.modality == Modality::kSpeech;
      }
    }
    REQUIRE(draws > 1000);
    const double frac = static_cast<double>(speech) / draws;
    CHECK(std::abs(frac - p) <= 3 * std::sqrt(p * (1 - p) / draws));
  }
}

TEST_CASE("sequence invariants over 10,000 compiled dialogues") {
  std::size_t multi_segment_turns = 0;
  for (const auto& d : random_corpus(10'000, 9)) {
    const auto s = interleave_dialogue(d, policy(0.5, 0.5), 99);
    std::size_t prev_turn = 0, prev_seg = 0;
    bool first = true;
    for (std::size_t i = 0; i < s.elements.size(); ++i) {
      const auto& e = s.elements[i];
      CHECK(e.role == d.turns[e.origin.turn].role);
      if (!first) CHECK((e.origin.turn > prev_turn || (e.origin.turn == prev_turn && e.origin.segment == prev_seg + 1)));
      first = false;
      prev_turn = e.origin.turn;
      prev_seg = e.origin.segment;
      if (e.role == Role::kUser) CHECK_FALSE(e.loss_target);
      const bool expect = e.role == Role::kAssistant && e.modality == Modality::kText &&
                          !oracle_masked(d, e.origin.turn, e.text_range);
      CHECK(e.loss_target == expect);
      const bool last_of_turn = i + 1 == s.elements.size() || s.elements[i + 1].origin.turn != e.origin.turn;
      if (e.role == Role::kAssistant && last_of_turn) {
        CHECK(e.modality == Modality::kText);
        if (e.origin.segment > 0) ++multi_segment_turns;
      }
    }
  }
  CHECK(multi_segment_turns > 5000);
}

TEST_CASE("cleaning masks remove segments from the loss targets") {
  auto d = dialogue("m", {user("Q?"), assistant({"Right. ", "Wrong claim. ", "Done."})});
  const auto q = static_cast<std::int64_t>(utf8::length("Q?"));
  d.quality_flags = {{FlagKind::kLogicContradictionSevere, {{q + 7, q + 12}}}};
  const auto s = interleave_dialogue(d, policy(0.0, 0.0), 1);
  const auto targets = extract_loss_targets(s);
  REQUIRE(targets.size() == 2);
  CHECK(targets[0].text == "Right. ");
  CHECK(targets[1].text == "Done.");

  const auto extra = interleave_dialogue(test::two_turn(), policy(0.0, 0.0), 1, {{1, {0, 1}}});
  CHECK(extract_loss_targets(extra).size() == 1);
}

TEST_CASE("speech drawn for a turn without audio is a compile error naming the turn") {
  auto d = dialogue("noaudio", {user("Q?", false), assistant({"A."})});
  try {
    (void)interleave_dialogue(d, policy(1.0, 0.5), 1);
    FAIL("expected CompileError");
  } catch (const CompileError& e) {
    CHECK(std::string(e.what()).find("noaudio turn 0") != std::string::npos);
  }
  CHECK_NOTHROW(interleave_dialogue(d, policy(0.0, 1.0), 1));
}

TEST_CASE("unaligned assistant turns compile as one text segment") {
  auto d = test::two_turn();
  d.turns[1].alignment.clear();
  const auto s = interleave_dialogue(d, policy(0.0, 1.0), 1);
  REQUIRE(s.elements.size() == 2);
  CHECK(s.elements[1].modality == Modality::kText);
  CHECK(s.elements[1].text == d.turns[1].text);
}

TEST_CASE("per-dialogue user draw") {
  InterleavePolicy p = policy(0.5, 0.5);
  p.user_draw_per_dialogue = true;
  for (const auto& d : random_corpus(300, 10)) {
    const auto s = interleave_dialogue(d, p, 5);
    std::set<Modality> seen;
    for (const auto& e : s.elements)
      if (e.role == Role::kUser) seen.insert(e.modality);
    CHECK(seen.size() <= 1);
  }
}

TEST_CASE("determinism and record seeds") {
  const auto ds = random_corpus(100, 12);
  for (const auto& d : ds) {
    const auto a = serialize_sequence(interleave_dialogue(d, policy(0.5, 0.5), 7));
    CHECK(a == serialize_sequence(interleave_dialogue(d, policy(0.5, 0.5), 7)));
  }
  CHECK(record_seed(7, "x") != record_seed(8, "x"));
  CHECK(record_seed(7, "x") != record_seed(7, "y"));
}

TEST_CASE("sequence JSON round trip") {
  for (const auto& d : random_corpus(100, 13)) {
    const auto s = interleave_dialogue(d, policy(0.5, 0.5), 7);
    const auto back = sequence_from_json(sequence_to_json(s));
    CHECK(serialize_sequence(back) == serialize_sequence(s));
  }
}

TEST_CASE("policy checks") {
  CHECK_THROWS_AS(check_policy(policy(1.5, 0.5)), ArgumentError);
  CHECK_THROWS_AS(check_policy(policy(0.5, -0.1)), ArgumentError);
  InterleavePolicy p;
  p.final_segment_text = false;
  CHECK_THROWS_AS(check_policy(p), ArgumentError);
}
