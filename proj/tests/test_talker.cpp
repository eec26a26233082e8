#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "support.hpp"
#include "synth/generator.hpp"
#include "talker/talker.hpp"
#include "util/rng.hpp"

using namespace forge;
using namespace forge::talker;
using corpus::Dialogue;
using corpus::Role;
using test::assistant;
using test::dialogue;
using test::user;

namespace {

std::vector<std::int64_t> iota(std::int64_t from, std::int64_t n) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = from + i;
  return v;
}

std::vector<Token> tagged(Stream s, const std::vector<std::int64_t>& ids) {
  std::vector<Token> out;
  for (auto id : ids) out.push_back({s, id});
  return out;
}

std::vector<Token> concat(std::initializer_list<std::vector<Token>> parts) {
  std::vector<Token> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<std::int64_t> only(const std::vector<Token>& toks, Stream s) {
  std::vector<std::int64_t> out;
  for (const auto& t : toks)
    if (t.stream == s) out.push_back(t.id);
  return out;
}

std::vector<Dialogue> corpus_for(Mode mode, std::size_t n, std::uint64_t seed) {
  synth::GeneratorOptions o;
  o.count = n;
  o.seed = seed;
  o.speakers = 40;
  o.source = mode == Mode::kDialogue ? 0 : mode == Mode::kLongText ? 3 : 4;
  return synth::generate(o);
}

// Speaker of each turn the assembler voices, and the blocks it should emit.
struct Expected {
  std::string target;
  std::vector<Block> blocks;
};

Expected expected(const Dialogue& d, Mode mode) {
  Expected e;
  auto block = [](const corpus::Turn& t, SpecialToken role) {
    Block b;
    b.role = role;
    for (char32_t c : utf8::decode(t.text)) b.text_ids.push_back(static_cast<std::int64_t>(c));
    if (t.audio) b.speech_ids = t.audio->token_ids;
    return b;
  };
  if (mode == Mode::kStandardSentence) {
    e.target = d.turns.back().speaker_id;
    e.blocks.push_back(block(d.turns.back(), SpecialToken::kRoleAssistant));
    return e;
  }
  e.target = mode == Mode::kDialogue ? d.turns[1].speaker_id : d.turns[0].speaker_id;
  for (const auto& t : d.turns)
    e.blocks.push_back(block(t, mode == Mode::kDialogue && t.role == Role::kUser ? SpecialToken::kRoleUser
                                                                                : SpecialToken::kRoleAssistant));
  return e;
}

bool has_independent_segment(const CorpusIndex& index, const std::string& speaker, const std::string& sample) {
  for (const auto& ref : index.segments(speaker))
    if (ref.dialogue_id != sample) return true;
  return false;
}

}  // namespace

TEST_CASE("stream_interleave examples") {
  const auto t5 = iota(1, 5), s15 = iota(101, 15);
  CHECK(stream_interleave(t5, s15, {}) == concat({tagged(Stream::kText, t5), tagged(Stream::kSpeech, s15)}));

  const auto t10 = iota(1, 10), s30 = iota(101, 30);
  CHECK(stream_interleave(t10, s30, {}) ==
        concat({tagged(Stream::kText, iota(1, 5)), tagged(Stream::kSpeech, iota(101, 15)),
                tagged(Stream::kText, iota(6, 5)), tagged(Stream::kSpeech, iota(116, 15))}));

  CHECK(stream_interleave({}, s15, {}) == tagged(Stream::kSpeech, s15));
  CHECK(stream_interleave(t5, {}, {}) == tagged(Stream::kText, t5));
  CHECK(stream_interleave({}, {}, {}).empty());

  // The longer stream's tail comes out in one run.
  CHECK(stream_interleave(iota(1, 12), iota(101, 3), {}) ==
        concat({tagged(Stream::kText, iota(1, 5)), tagged(Stream::kSpeech, iota(101, 3)),
                tagged(Stream::kText, iota(6, 7))}));
  CHECK_THROWS_AS(stream_interleave(t5, s15, {0, 15}), ArgumentError);
}

TEST_CASE("stream_interleave preserves both streams and the chunk pattern") {
  Rng rng(77);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto nt = rng.between(0, 60), ns = rng.between(0, 120);
    const StreamRatio r{rng.between(1, 8), rng.between(1, 20), false};
    const auto text = iota(1, nt), speech = iota(10'000, ns);
    const auto out = stream_interleave(text, speech, r);
    CHECK(out.size() == text.size() + speech.size());
    CHECK(only(out, Stream::kText) == text);
    CHECK(only(out, Stream::kSpeech) == speech);

    // Run lengths: full chunks while both streams last.
    std::size_t i = 0, t_left = text.size(), s_left = speech.size();
    bool ok = true;
    while (i < out.size() && ok) {
      const Stream s = out[i].stream;
      std::size_t run = 0;
      while (i < out.size() && out[i].stream == s) ++i, ++run;
      auto& left = s == Stream::kText ? t_left : s_left;
      const auto other_left = s == Stream::kText ? s_left : t_left;
      const auto chunk = static_cast<std::size_t>(s == Stream::kText ? r.n_text : r.m_speech);
      left -= run;
      // A run is a whole chunk, or everything left of this stream.
      if (!(run == chunk || left == 0 || other_left == 0)) ok = false;
    }
    CHECK(ok);
  }
}

TEST_CASE("parse_ratio") {
  const auto r = parse_ratio("5:15");
  CHECK(r.n_text == 5);
  CHECK(r.m_speech == 15);
  CHECK_THROWS_AS(parse_ratio("5"), ArgumentError);
  CHECK_THROWS_AS(parse_ratio("0:3"), ArgumentError);
  CHECK_THROWS_AS(parse_ratio("a:b"), ArgumentError);
}

TEST_CASE("select_reference") {
  SUBCASE("forced choice") {
    const std::vector<Dialogue> ds{dialogue("A", {user("x", true, "s")}), dialogue("B", {user("y", true, "s")})};
    const CorpusIndex index(ds);
    for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(select_reference("s", index, "A", seed).segment.dialogue_id == "B");
  }
  SUBCASE("uniform over independent segments") {
    std::vector<Dialogue> ds;
    for (const char* id : {"A", "B", "C", "D", "E"}) ds.push_back(dialogue(id, {user(id, true, "s")}));
    const CorpusIndex index(ds);
    std::map<std::string, int> hits;
    for (std::uint64_t seed = 0; seed < 10'000; ++seed) ++hits[select_reference("s", index, "A", seed).segment.dialogue_id];
    CHECK(hits.count("A") == 0);
    REQUIRE(hits.size() == 4);
    for (const auto& [id, n] : hits) CHECK(std::abs(n / 10'000.0 - 0.25) <= 0.02);
    CHECK(select_reference("s", index, "A", 9).segment == select_reference("s", index, "A", 9).segment);
  }
  SUBCASE("singleton speaker") {
    const std::vector<Dialogue> ds{dialogue("A", {user("x", true, "solo"), user("y", true, "solo")})};
    const CorpusIndex index(ds);
    CHECK_THROWS_AS(select_reference("solo", index, "A", 1), NoReferenceError);
    CHECK_THROWS_AS(select_reference("nobody", index, "A", 1), NoReferenceError);
  }
}

TEST_CASE("assemble layouts") {
  const auto& reg = default_registry();
  auto ref_d = dialogue("ref", {user("zz", true, "a1"), assistant({"ref audio"}, true, "u1")});

  SUBCASE("standard sentence with empty text") {
    auto utt = dialogue("utt", {assistant({""}, false, "a1")}, corpus::Source::kShortUtterance);
    corpus::AudioTokenSpan a;
    a.token_ids = {7, 8, 9};
    a.duration_s = 3 / corpus::kTokenRateHz;
    utt.turns[0].audio = a;
    utt.turns[0].alignment.clear();
    const CorpusIndex index({utt, ref_d});
    const auto s = assemble(utt, Mode::kStandardSentence, {}, index, 1);
    const auto& ref_tokens = index.audio(s.reference).token_ids;
    auto want = concat({{{Stream::kSpecial, reg.id(SpecialToken::kRefStart)}},
                        tagged(Stream::kSpeech, ref_tokens),
                        {{Stream::kSpecial, reg.id(SpecialToken::kRefEnd)},
                         {Stream::kSpecial, reg.id(SpecialToken::kRoleAssistant)}},
                        tagged(Stream::kSpeech, {7, 8, 9}),
                        {{Stream::kSpecial, reg.id(SpecialToken::kEos)}}});
    CHECK(s.tokens == want);
    const auto parsed = parse_sequence(s.tokens);
    REQUIRE(parsed.blocks.size() == 1);
    CHECK(parsed.blocks[0].speech_ids == std::vector<std::int64_t>{7, 8, 9});
  }

  SUBCASE("dialogue mode U,A,U,A has four alternating role tokens") {
    auto d = dialogue("d", {user("q1"), assistant({"a1."}), user("q2"), assistant({"a2."})});
    const CorpusIndex index({d, ref_d});
    const auto s = assemble(d, Mode::kDialogue, {}, index, 3);
    std::vector<std::int64_t> roles;
    for (const auto& t : s.tokens)
      if (t.stream == Stream::kSpecial && (t.id == reg.id(SpecialToken::kRoleUser) || t.id == reg.id(SpecialToken::kRoleAssistant)))
        roles.push_back(t.id);
    CHECK(roles == std::vector<std::int64_t>{reg.id(SpecialToken::kRoleUser), reg.id(SpecialToken::kRoleAssistant),
                                             reg.id(SpecialToken::kRoleUser), reg.id(SpecialToken::kRoleAssistant)});
    CHECK(s.reference.dialogue_id == "ref");
  }

  SUBCASE("mode preconditions") {
    const CorpusIndex index({ref_d});
    CHECK_THROWS_AS(assemble(dialogue("e", {}), Mode::kDialogue, {}, index, 1), CompileError);
    auto mono = dialogue("m", {user("q", true, "a1"), assistant({"a."}, true, "a1")});
    CHECK_THROWS_AS(assemble(mono, Mode::kDialogue, {}, index, 1), CompileError);
    CHECK_THROWS_AS(assemble(test::two_turn(), Mode::kLongText, {}, index, 1), CompileError);
    auto swapped = dialogue("s", {assistant({"a."}), user("q")});
    CHECK_THROWS_AS(assemble(swapped, Mode::kDialogue, {}, index, 1), CompileError);
    auto silent = dialogue("x", {assistant({"a."}, false)});
    CHECK_THROWS_AS(assemble(silent, Mode::kStandardSentence, {}, index, 1), CompileError);
  }

  SUBCASE("self-reference is refused") {
    auto d = test::two_turn("only");
    const CorpusIndex index({d});
    CHECK_THROWS_AS(assemble(d, Mode::kDialogue, {}, index, 1), NoReferenceError);
  }
}

TEST_CASE("grammar round trip, leakage and loss mask over 1,000 dialogues per mode") {
  const auto& reg = default_registry();
  for (Mode mode : {Mode::kDialogue, Mode::kLongText, Mode::kStandardSentence}) {
    CAPTURE(to_string(mode));
    const auto ds = corpus_for(mode, 1000, 21 + static_cast<int>(mode));
    const CorpusIndex index(ds);
    std::size_t assembled = 0;
    for (bool randomized : {false, true}) {
      for (const auto& d : ds) {
        const auto want = expected(d, mode);
        if (!has_independent_segment(index, want.target, d.id)) {
          CHECK_THROWS_AS(assemble(d, mode, {5, 15, randomized}, index, 4), NoReferenceError);
          continue;
        }
        const auto s = assemble(d, mode, {5, 15, randomized}, index, 4);
        ++assembled;
        const auto parsed = parse_sequence(s.tokens);
        CHECK(parsed.blocks == want.blocks);
        CHECK(parsed.reference == index.audio(s.reference).token_ids);

        // Reference comes from another sample, same speaker.
        CHECK(s.reference.dialogue_id != d.id);
        const auto host = std::find_if(ds.begin(), ds.end(), [&](const Dialogue& x) { return x.id == s.reference.dialogue_id; });
        REQUIRE(host != ds.end());
        CHECK(host->turns[s.reference.turn].speaker_id == want.target);

        // Mask is exactly the speech tokens inside assistant blocks.
        REQUIRE(s.speech_loss_mask.size() == s.tokens.size());
        bool in_assistant = false;
        bool mask_ok = true;
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
          const auto& t = s.tokens[i];
          if (t.stream == Stream::kSpecial) {
            const auto sp = reg.lookup(t.id);
            if (sp == SpecialToken::kRoleAssistant) in_assistant = true;
            if (sp == SpecialToken::kRoleUser || sp == SpecialToken::kEos) in_assistant = false;
          }
          if (s.speech_loss_mask[i] != (in_assistant && t.stream == Stream::kSpeech)) mask_ok = false;
        }
        CHECK(mask_ok);
      }
    }
    CHECK(assembled > 1500);
  }
}

TEST_CASE("assembly is deterministic") {
  const auto ds = corpus_for(Mode::kDialogue, 200, 5);
  const CorpusIndex index(ds);
  for (const auto& d : ds) {
    if (!has_independent_segment(index, d.turns[1].speaker_id, d.id)) continue;
    CHECK(serialize_sequence(assemble(d, Mode::kDialogue, {5, 15, true}, index, 8)) ==
          serialize_sequence(assemble(d, Mode::kDialogue, {5, 15, true}, index, 8)));
  }
}

TEST_CASE("parse_sequence rejects malformed sequences") {
  const auto& reg = default_registry();
  const Token rs{Stream::kSpecial, reg.id(SpecialToken::kRefStart)}, re{Stream::kSpecial, reg.id(SpecialToken::kRefEnd)},
      ra{Stream::kSpecial, reg.id(SpecialToken::kRoleAssistant)}, eos{Stream::kSpecial, reg.id(SpecialToken::kEos)};
  const Token sp{Stream::kSpeech, 3}, tx{Stream::kText, 'a'};

  const auto minimal = parse_sequence({rs, sp, re, ra, sp, eos});
  CHECK(minimal.blocks.size() == 1);

  try {
    (void)parse_sequence({rs, sp, sp, ra, tx, eos});
    FAIL("expected GrammarError");
  } catch (const GrammarError& e) {
    CHECK(e.index() == 3);
  }
  CHECK_THROWS_AS(parse_sequence({}), GrammarError);
  CHECK_THROWS_AS(parse_sequence({rs, tx, re, ra, eos}), GrammarError);
  CHECK_THROWS_AS(parse_sequence({rs, re, eos}), GrammarError);
  CHECK_THROWS_AS(parse_sequence({rs, re, ra, sp}), GrammarError);
  CHECK_THROWS_AS(parse_sequence({rs, re, ra, sp, eos, sp}), GrammarError);
  CHECK_THROWS_AS(parse_sequence({rs, re, ra, {Stream::kSpecial, 5}, eos}), GrammarError);
}

TEST_CASE("special-token registry") {
  const auto& reg = default_registry();
  std::set<std::int64_t> ids(reg.ids.begin(), reg.ids.end());
  CHECK(ids.size() == kSpecialTokenCount);
  CHECK(*ids.begin() >= kSpecialBase);
  CHECK(*ids.begin() >= kTextIdLimit);

  const auto j = registry_to_json(reg);
  CHECK(j["version"] == "talker-special-v1");
  CHECK(load_registry(j).ids == reg.ids);

  auto dup = j;
  dup["tokens"]["EOS"] = dup["tokens"]["REF_START"];
  CHECK_THROWS_AS(load_registry(dup), ParseError);
  auto low = j;
  low["tokens"]["EOS"] = 42;
  CHECK_THROWS_AS(load_registry(low), ParseError);
  auto missing = j;
  missing["tokens"].erase("EOS");
  CHECK_THROWS_AS(load_registry(missing), ParseError);
}

TEST_CASE("mode per source") {
  CHECK(mode_for_source(corpus::Source::kRealLife) == Mode::kDialogue);
  CHECK(mode_for_source(corpus::Source::kAudiobook) == Mode::kLongText);
  CHECK(mode_for_source(corpus::Source::kShortUtterance) == Mode::kStandardSentence);
  CHECK(mode_from("long_text") == Mode::kLongText);
  CHECK_FALSE(mode_from("monologue"));
}
