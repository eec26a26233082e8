#include <doctest.h>

#include <cmath>
#include <functional>
#include <set>

#include "corpus/corpus.hpp"
#include "support.hpp"
#include "synth/generator.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

using namespace forge;
using namespace forge::corpus;
using forge::test::assistant;
using forge::test::dialogue;
using forge::test::two_turn;
using forge::test::user;

namespace {

bool mentions(const ValidationReport& r, const std::string& path_part, const std::string& msg_part = "") {
  for (const auto& v : r)
    if (v.path.find(path_part) != std::string::npos && v.message.find(msg_part) != std::string::npos) return true;
  return false;
}

// Pool-by-two over an explicit frame list, padding an odd tail with a copy.
std::int64_t pad_and_pool(std::int64_t n) {
  std::vector<int> frames(static_cast<std::size_t>(n), 1);
  if (frames.size() % 2 == 1) frames.push_back(frames.back());
  std::int64_t pooled = 0;
  for (std::size_t i = 0; i + 1 < frames.size(); i += 2) ++pooled;
  return pooled;
}

}  // namespace

TEST_CASE("parse_corpus_text: empty input") {
  auto p = parse_corpus_text("");
  CHECK(p.dialogues.empty());
  CHECK(p.rejects.empty());
}

TEST_CASE("parse_corpus_text: one valid record") {
  auto p = parse_corpus_text(serialize_dialogue(two_turn()) + "\n");
  REQUIRE(p.dialogues.size() == 1);
  CHECK(p.dialogues[0].turns.size() == 2);
  CHECK(p.rejects.empty());
  CHECK(validate_dialogue(p.dialogues[0]).empty());
}

TEST_CASE("parse_corpus_text: a line missing turns is rejected with its line number") {
  auto good = serialize_dialogue(two_turn());
  auto bad = Json::parse(good);
  bad.erase("turns");
  auto p = parse_corpus_text(good + "\n" + bad.dump() + "\n");
  REQUIRE(p.dialogues.size() == 1);
  REQUIRE(p.rejects.size() == 1);
  CHECK(p.rejects[0].line == 2);
  CHECK(p.rejects[0].reason.find("turns") != std::string::npos);
}

TEST_CASE("parse_corpus_text: malformed json, bad enums and blank lines") {
  auto good = serialize_dialogue(two_turn());
  auto bad_role = Json::parse(good);
  bad_role["turns"][0]["role"] = "narrator";
  auto p = parse_corpus_text("{not json\n\n" + bad_role.dump() + "\n" + good + "\n", 3);
  CHECK(p.dialogues.size() == 1);
  REQUIRE(p.rejects.size() == 2);
  CHECK(p.rejects[0].line == 1);
  CHECK(p.rejects[1].line == 3);
  CHECK(p.rejects[1].reason.find("turns[0].role") != std::string::npos);
  CHECK(p.lines[0] == 4);
}

TEST_CASE("parse_corpus: unreadable file is fatal") {
  CHECK_THROWS_AS(parse_corpus("/nonexistent/dir/corpus.jsonl"), IoError);
}

TEST_CASE("parse results do not depend on worker count") {
  synth::GeneratorOptions o;
  o.count = 300;
  o.seed = 11;
  const auto text = serialize_corpus(synth::generate(o));
  const auto a = parse_corpus_text(text, 1);
  const auto b = parse_corpus_text(text, 7);
  CHECK(a.dialogues == b.dialogues);
  CHECK(a.lines == b.lines);
}

TEST_CASE("serialization: fixed key order, no whitespace") {
  const auto s = serialize_dialogue(two_turn());
  CHECK(s.rfind("{\"id\":\"d1\",\"language\":\"en\",\"source\":\"real_life\",\"quality_flags\":[", 0) == 0);
  CHECK(s.find("\"turns\":[{\"role\":\"user\",\"speaker_id\":\"u1\",\"text\":\"Hello there.\",\"audio\":{"
               "\"token_ids\":[") != std::string::npos);
  CHECK(s.find("\"alignment\":[{\"text_range\":[0,12],\"audio_range\":[0,24],\"index\":0}],\"caption\":null") !=
        std::string::npos);
  CHECK(s.find('\n') == std::string::npos);
  CHECK(s.find(": ") == std::string::npos);
}

TEST_CASE("parse -> serialize -> parse is identity and byte-stable") {
  synth::GeneratorOptions o;
  o.count = 200;
  o.seed = 3;
  o.p_audio = 0.8;
  const auto ds = synth::generate(o);
  const auto text = serialize_corpus(ds);
  const auto p = parse_corpus_text(text);
  REQUIRE(p.rejects.empty());
  CHECK(p.dialogues == ds);
  CHECK(serialize_corpus(p.dialogues) == text);
}

TEST_CASE("downsample_frames") {
  CHECK(downsample_frames(0) == 0);
  CHECK(downsample_frames(100) == 50);
  CHECK(downsample_frames(101) == 51);
  for (std::int64_t n = 0; n <= 500; ++n) CHECK(downsample_frames(n) == pad_and_pool(n));
  CHECK_THROWS_AS(downsample_frames(-1), ArgumentError);
}

TEST_CASE("tokens_for_hours reproduces the stage budgets") {
  CHECK(tokens_for_hours(320000, 12.5) == 14'400'000'000LL);
  CHECK(tokens_for_hours(256000, 12.5) + tokens_for_hours(64000, 12.5) == 14'400'000'000LL);
  CHECK(tokens_for_hours(3'204'000, 12.5) == 144'180'000'000LL);
  CHECK(tokens_for_hours(0, 12.5) == 0);
  CHECK_THROWS_AS(tokens_for_hours(-1, 12.5), ArgumentError);
  CHECK_THROWS_AS(tokens_for_hours(1, 0), ArgumentError);
}

TEST_CASE("tokens_for_hours is linear within one token") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform() * 1e5, b = rng.uniform() * 1e5;
    const auto lhs = tokens_for_hours(a + b);
    const auto rhs = tokens_for_hours(a) + tokens_for_hours(b);
    CHECK(std::llabs(lhs - rhs) <= 1);
  }
}

TEST_CASE("validate_dialogue: examples") {
  CHECK(validate_dialogue(two_turn()).empty());

  auto overlap = two_turn();
  overlap.turns[1] = test::turn(Role::kAssistant, "a1", {"Hello", "abc"});
  overlap.turns[1].alignment[0].text_range = {0, 5};
  overlap.turns[1].alignment[1].text_range = {3, 8};
  const auto r = validate_dialogue(overlap);
  CHECK(mentions(r, "turns[1].alignment[1].text_range", "overlaps alignment[0]"));

  auto flipped = two_turn();
  std::swap(flipped.turns[0].role, flipped.turns[1].role);
  CHECK(mentions(validate_dialogue(flipped), "turns[0].role", "role alternation"));
}

TEST_CASE("validate_dialogue: one report entry per violation, never throws") {
  Dialogue d;
  auto r = validate_dialogue(d);
  CHECK(mentions(r, "id"));
  CHECK(mentions(r, "turns", "no turns"));

  auto bad = two_turn();
  bad.turns[0].audio->token_ids[3] = -4;
  bad.turns[0].audio->duration_s = 100;
  bad.turns[1].text = "\xff\xfe";
  bad.quality_flags = {{FlagKind::kLogicContradictionSevere, {}}, {FlagKind::kClean, {{0, 1}}}};
  r = validate_dialogue(bad);
  CHECK(mentions(r, "turns[0].audio.token_ids[3]", "negative"));
  CHECK(mentions(r, "turns[0].audio", "duration implies"));
  CHECK(mentions(r, "turns[1].text", "UTF-8"));
  CHECK(mentions(r, "quality_flags[0].spans", "no spans"));
  CHECK(mentions(r, "quality_flags[1].spans", "clean flag"));
}

TEST_CASE("validate_corpus: duplicate ids") {
  const auto r = validate_corpus({two_turn("x"), two_turn("y"), two_turn("x")});
  REQUIRE(r.size() == 1);
  CHECK(r[0].path == "dialogues[2].id");
}

TEST_CASE("generated turns satisfy the token/duration bound") {
  synth::GeneratorOptions o;
  o.count = 500;
  o.seed = 99;
  for (const auto& d : synth::generate(o)) {
    CHECK(validate_dialogue(d).empty());
    for (const auto& t : d.turns) {
      if (!t.audio) continue;
      const auto n = static_cast<std::int64_t>(t.audio->token_ids.size());
      CHECK(std::llabs(n - std::llround(t.audio->duration_s * t.audio->frame_rate_hz)) <= 1);
    }
  }
}

TEST_CASE("project_to_turns splits global spans at turn boundaries") {
  auto d = dialogue("p", {user("abcd"), assistant({"efgh"}), user("ij")});
  const auto spans = project_to_turns(d, {{2, 6}, {8, 10}});
  REQUIRE(spans.size() == 3);
  CHECK(spans[0] == TurnSpan{0, {2, 4}});
  CHECK(spans[1] == TurnSpan{1, {0, 2}});
  CHECK(spans[2] == TurnSpan{2, {0, 2}});
  CHECK(global_text_offsets(d) == std::vector<std::int64_t>{0, 4, 8, 10});
}

TEST_CASE("character offsets count Unicode scalars") {
  auto d = dialogue("zh", {user("你好"), assistant({"我很好。", "谢谢"})});
  CHECK(validate_dialogue(d).empty());
  CHECK(d.turns[1].alignment[1].text_range == Range{4, 6});
}

// ---- brute-force invariant enumerator ---------------------------------------

namespace {

// Independent statement of the record invariants.
bool oracle_valid(const Dialogue& d) {
  if (d.id.empty() || d.turns.empty()) return false;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const auto& t = d.turns[i];
    if ((i % 2 == 0) != (t.role == Role::kUser)) return false;
    if (t.speaker_id.empty() || !utf8::valid(t.text)) return false;
    const auto len = static_cast<std::int64_t>(utf8::length(t.text));
    total += len;
    std::int64_t n_tok = -1;
    if (t.audio) {
      n_tok = static_cast<std::int64_t>(t.audio->token_ids.size());
      for (auto id : t.audio->token_ids)
        if (id < 0) return false;
      if (!(t.audio->frame_rate_hz > 0) || !(t.audio->duration_s >= 0)) return false;
      if (std::llabs(n_tok - std::llround(t.audio->duration_s * t.audio->frame_rate_hz)) > 1) return false;
    }
    if (t.alignment.empty()) continue;
    // Partition: every character covered exactly once, spans in order.
    std::vector<int> cover(static_cast<std::size_t>(std::max<std::int64_t>(len, 0)), 0);
    std::int64_t last_text_end = 0, last_audio_end = 0;
    for (std::size_t k = 0; k < t.alignment.size(); ++k) {
      const auto& s = t.alignment[k];
      if (s.index != static_cast<std::int64_t>(k)) return false;
      if (s.text_range.start >= s.text_range.end) return false;
      if (s.text_range.start != last_text_end) return false;
      last_text_end = s.text_range.end;
      if (s.audio_range.start < 0 || s.audio_range.start > s.audio_range.end) return false;
      if (k > 0 && s.audio_range.start < last_audio_end) return false;
      last_audio_end = std::max(last_audio_end, s.audio_range.end);
      if (n_tok >= 0 && s.audio_range.end > n_tok) return false;
      for (auto c = s.text_range.start; c < s.text_range.end; ++c) {
        if (c < 0 || c >= len) return false;
        ++cover[static_cast<std::size_t>(c)];
      }
    }
    for (int c : cover)
      if (c != 1) return false;
  }
  bool clean = false;
  for (const auto& f : d.quality_flags) clean |= f.kind == FlagKind::kClean;
  for (const auto& f : d.quality_flags) {
    if (f.kind == FlagKind::kLogicContradictionSevere && f.spans.empty()) return false;
    if (f.kind == FlagKind::kClean && !f.spans.empty()) return false;
    if (f.kind != FlagKind::kClean && clean) return false;
    for (const auto& s : f.spans)
      if (s.start < 0 || s.end <= s.start || s.end > total) return false;
  }
  return true;
}

using Mutation = std::function<void(Dialogue&, Rng&)>;

std::vector<Mutation> mutations() {
  auto pick_turn = [](Dialogue& d, Rng& rng) -> Turn& { return d.turns[rng.below(d.turns.size())]; };
  return {
      [](Dialogue& d, Rng&) { d.id.clear(); },
      [](Dialogue& d, Rng&) { d.turns.clear(); },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        t.role = t.role == Role::kUser ? Role::kAssistant : Role::kUser;
      },
      [=](Dialogue& d, Rng& rng) { pick_turn(d, rng).speaker_id.clear(); },
      [=](Dialogue& d, Rng& rng) { pick_turn(d, rng).text += "\xc3"; },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (t.audio && !t.audio->token_ids.empty()) t.audio->token_ids[rng.below(t.audio->token_ids.size())] = -1;
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (t.audio) t.audio->duration_s += static_cast<double>(rng.between(-3, 3)) / 12.5;
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (t.audio) t.audio->frame_rate_hz = rng.bernoulli(0.5) ? 0.0 : -12.5;
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (!t.alignment.empty()) {
          auto& s = t.alignment[rng.below(t.alignment.size())];
          s.text_range.start += rng.between(-2, 2);
        }
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (!t.alignment.empty()) t.alignment[rng.below(t.alignment.size())].text_range.end += rng.between(-2, 2);
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (!t.alignment.empty()) t.alignment[rng.below(t.alignment.size())].audio_range.end += rng.between(-3, 3);
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (!t.alignment.empty()) t.alignment[rng.below(t.alignment.size())].audio_range.start += rng.between(-3, 3);
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (!t.alignment.empty()) t.alignment[rng.below(t.alignment.size())].index += 1;
      },
      [=](Dialogue& d, Rng& rng) {
        auto& t = pick_turn(d, rng);
        if (t.alignment.size() > 1) t.alignment.erase(t.alignment.begin() + 1);
      },
      [=](Dialogue& d, Rng& rng) { pick_turn(d, rng).alignment.clear(); },
      [=](Dialogue& d, Rng& rng) { pick_turn(d, rng).audio.reset(); },
      [](Dialogue& d, Rng& rng) { d.quality_flags = {{FlagKind::kLogicContradictionSevere, {}}}; (void)rng; },
      [](Dialogue& d, Rng& rng) {
        const auto total = global_text_offsets(d).back();
        d.quality_flags = {{FlagKind::kLogicContradictionSevere, {{rng.between(-1, total), rng.between(0, total + 2)}}}};
      },
      [](Dialogue& d, Rng& rng) { d.quality_flags.push_back({FlagKind::kMissingContext, {}}); (void)rng; },
      [](Dialogue& d, Rng& rng) { d.quality_flags = {{FlagKind::kClean, {{0, 1 + static_cast<std::int64_t>(rng.below(2))}}}}; },
  };
}

}  // namespace

TEST_CASE("validate_dialogue agrees with an independent invariant oracle") {
  synth::GeneratorOptions o;
  o.count = 400;
  o.seed = 21;
  o.max_turns = 4;
  o.max_segments = 3;
  o.p_audio = 0.7;
  const auto base = synth::generate(o);
  const auto muts = mutations();
  Rng rng(77);
  int valid = 0, invalid = 0;
  for (int round = 0; round < 5; ++round) {
    for (const auto& original : base) {
      auto d = original;
      const auto k = rng.below(3);  // 0, 1 or 2 mutations
      for (std::uint64_t m = 0; m < k && !d.turns.empty(); ++m) muts[rng.below(muts.size())](d, rng);
      const bool expect = oracle_valid(d);
      const auto report = validate_dialogue(d);
      CHECK_MESSAGE(report.empty() == expect, serialize_dialogue(d));
      (expect ? valid : invalid)++;
    }
  }
  CHECK(valid > 300);
  CHECK(invalid > 300);
}
