#include <doctest.h>

#include "corpus/corpus.hpp"
#include "pipeline/pipeline.hpp"
#include "schedule/schedule.hpp"
#include "support.hpp"
#include "tempdir.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"

using namespace forge;
using forge::pipeline::run_command;
using test::slurp;
using test::spit;
using test::TempDir;

namespace {

Json manifest_without_time(const std::string& path) {
  auto j = Json::parse(slurp(path));
  j.erase("created_at");
  return j;
}

std::size_t line_count(const std::string& path) {
  return pipeline::read_lines(path).size();
}

}  // namespace

TEST_CASE("generate, clean, build: outputs independent of jobs and repeat runs") {
  TempDir dir("pipeline");
  const auto corpus = dir / "corpus.jsonl";
  run_command("generate", Json{{"out", corpus}, {"count", 300}, {"seed", 17}, {"assistant_initial_fragments", true}});
  REQUIRE(line_count(corpus) == 300);

  std::map<std::string, std::string> first;
  for (int jobs : {1, 8, 1, 8}) {
    CAPTURE(jobs);
    const auto cleaned = dir / "cleaned.jsonl";
    const auto thinker = dir / "thinker.jsonl";
    const auto talker = dir / "talker.jsonl";
    run_command("clean", Json{{"corpus", corpus}, {"out", cleaned}, {"seed", 17}, {"jobs", jobs}});
    run_command("build-thinker", Json{{"corpus", cleaned}, {"out", thinker}, {"seed", 17}, {"jobs", jobs}});
    run_command("build-talker", Json{{"corpus", cleaned}, {"out", talker}, {"seed", 17}, {"jobs", jobs}});
    std::map<std::string, std::string> now;
    for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
      const auto name = entry.path().filename().string();
      if (name == "corpus.jsonl") continue;
      now[name] = name.ends_with(".manifest.json") ? manifest_without_time(entry.path().string()).dump()
                                                   : slurp(entry.path().string());
    }
    if (first.empty()) {
      first = now;
      CHECK(first.size() == 12);  // 11 outputs plus the generate manifest
    } else {
      CHECK(now == first);
    }
  }
}

TEST_CASE("build-thinker output layout and manifest") {
  TempDir dir("thinker-out");
  const auto corpus = dir / "c.jsonl";
  corpus::write_corpus(corpus, {test::two_turn("a"), test::two_turn("b")});
  spit(dir / "bad.jsonl", slurp(corpus) + "{not json\n");
  const auto r = run_command("build-thinker", Json{{"corpus", dir / "bad.jsonl"}, {"out", dir / "t.jsonl"}, {"seed", "0x10"}});
  const auto lines = pipeline::read_lines(dir / "t.jsonl");
  REQUIRE(lines.size() == 3);
  const auto header = Json::parse(lines[0]);
  CHECK(header["manifest"]["master_seed"] == 16);
  CHECK(header["manifest"]["counts"]["sequences"] == 2);
  CHECK(Json::parse(lines[1])["dialogue_id"] == "a");
  CHECK(Json::parse(lines[2])["dialogue_id"] == "b");
  const auto errors = pipeline::read_lines(dir / "t.jsonl.errors.jsonl");
  REQUIRE(errors.size() == 1);
  CHECK(Json::parse(errors[0])["stage"] == "parse");
  CHECK(Json::parse(errors[0])["line"] == 3);

  CHECK(r.body["command"] == "forge build-thinker");
  CHECK(r.body["tool_version"] == std::string(pipeline::tool_version()));
  CHECK(r.body["inputs"].contains("bad.jsonl"));
  CHECK(r.body["outputs"].contains("t.jsonl"));
  CHECK(r.body["outputs"]["t.jsonl"] == sha256_hex(slurp(dir / "t.jsonl")));
  CHECK(r.body["config_hash"] == pipeline::config_hash(r.body["config"]));

  // config hash moves with any config value.
  const auto other = run_command("build-thinker", Json{{"corpus", corpus}, {"out", dir / "u.jsonl"}, {"p_user", 0.25}});
  CHECK(other.body["config_hash"] != r.body["config_hash"]);
  const auto same = run_command("build-thinker", Json{{"corpus", corpus}, {"out", dir / "v.jsonl"}, {"jobs", 3}});
  CHECK(same.body["config_hash"] == r.body["config_hash"]);
}

TEST_CASE("speech drawn for a text-only turn lands in the errors sidecar") {
  TempDir dir("thinker-err");
  auto d = corpus::Dialogue(test::two_turn("x"));
  d.turns[0].audio.reset();
  corpus::write_corpus(dir / "c.jsonl", {d, test::two_turn("y")});
  const auto r = run_command("build-thinker", Json{{"corpus", dir / "c.jsonl"}, {"out", dir / "t.jsonl"}, {"p_user", 1.0}});
  CHECK(r.body["counts"]["sequences"] == 1);
  const auto errors = pipeline::read_lines(dir / "t.jsonl.errors.jsonl");
  REQUIRE(errors.size() == 1);
  const auto e = Json::parse(errors[0]);
  CHECK(e["stage"] == "compile");
  CHECK(e["dialogue_id"] == "x");
  CHECK(e["error"].get<std::string>().find("turn 0") != std::string::npos);
}

TEST_CASE("validate reports") {
  TempDir dir("validate");
  corpus::write_corpus(dir / "ok.jsonl", {test::two_turn("a")});
  const auto ok = run_command("validate", Json{{"corpus", dir / "ok.jsonl"}});
  CHECK_FALSE(ok.failed);
  CHECK(ok.body["valid"] == true);

  corpus::write_corpus(dir / "dup.jsonl", {test::two_turn("a"), test::two_turn("a")});
  const auto dup = run_command("validate", Json{{"corpus", dir / "dup.jsonl"}});
  CHECK(dup.failed);
  CHECK(dup.body["violations"].size() == 1);

  CHECK_THROWS_AS(run_command("validate", Json{{"corpus", dir / "missing.jsonl"}}), IoError);
  CHECK_THROWS_AS(run_command("validate", Json::object()), ArgumentError);
  CHECK_THROWS_AS(run_command("nonsense", Json::object()), ArgumentError);
  CHECK_THROWS_AS(run_command("validate", Json{{"corpus", dir / "ok.jsonl"}, {"jobs", 0}}), ArgumentError);
  CHECK_THROWS_AS(run_command("build-thinker", Json{{"corpus", dir / "ok.jsonl"}, {"out", dir / "o"}, {"seed", -1}}),
                  ArgumentError);
}

TEST_CASE("stats arithmetic and the budget check it feeds") {
  TempDir dir("stats");
  auto make = [](const std::string& id) {
    auto d = test::dialogue(id, {test::user("x")});
    corpus::AudioTokenSpan a;
    a.duration_s = 10.0;
    a.token_ids.assign(125, 1);
    d.turns[0].audio = a;
    d.turns[0].alignment.clear();
    return d;
  };
  corpus::write_corpus(dir / "c.jsonl", {make("a"), make("b")});
  const auto r = run_command("stats", Json{{"corpus", dir / "c.jsonl"}, {"out", dir / "stats.json"}});
  CHECK(r.body["audio_seconds"] == 20.0);
  CHECK(r.body["tokens"] == 250);
  CHECK(r.body["classes"]["real_life"]["tokens"] == 250);
  CHECK(r.body["classes"]["real_life"]["observed_tokens"] == 250);
  CHECK(r.body["languages"]["en"] == 2);

  spit(dir / "empty.jsonl", "");
  const auto empty = run_command("stats", Json{{"corpus", dir / "empty.jsonl"}});
  CHECK(empty.body["dialogues"] == 0);
  CHECK(empty.body["tokens"] == 0);
  CHECK(empty.body["audio_seconds"] == 0.0);

  // A plan whose token budget is backed by the corpus's real_life hours.
  schedule::StageSpec s{schedule::StageId::kS1GeneralAudio};
  s.phases = {{1.0, {schedule::ParamGroup::kAudioAdapter}, 1e-4}};
  s.budget = {{"speech_tokens", 250, schedule::Unit::kTokens, {"real_life"}}};
  spit(dir / "plan.json", schedule::plan_to_json({s}).dump());
  const auto b = run_command("plan-budget", Json{{"plan", dir / "plan.json"}, {"stats", dir / "stats.json"}});
  CHECK_FALSE(b.failed);
  CHECK(b.body["lines"][0]["derived"] == 250.0);
  CHECK(b.body["all_pass"] == true);
}

TEST_CASE("clean sidecars and resumption") {
  TempDir dir("clean");
  auto severe = test::two_turn("sev");
  severe.quality_flags = {{corpus::FlagKind::kLogicContradictionSevere, {{12, 14}}}};
  auto fixable = test::two_turn("fix");
  fixable.quality_flags = {{corpus::FlagKind::kLogicContradictionCorrectable, {}}};
  corpus::write_corpus(dir / "c.jsonl", {test::two_turn("ok"), severe, fixable});

  const auto r = run_command("clean", Json{{"corpus", dir / "c.jsonl"}, {"out", dir / "o.jsonl"}});
  CHECK(r.body["counts"]["cleaned"] == 3);
  CHECK(r.body["counts"]["masked_spans"] == 1);
  const auto prov = pipeline::read_lines(dir / "o.jsonl.provenance.jsonl");
  REQUIRE(prov.size() == 3);
  CHECK(Json::parse(prov[1])["branch"] == "information_preservation");
  CHECK(Json::parse(prov[2])["provenance"].size() == 2);
  CHECK(slurp(dir / "o.jsonl.deferred.jsonl").empty());

  // An unreachable HTTP service defers everything that needs a client.
  Json cc{{"kind", "http"}, {"corrector_url", "http://127.0.0.1:1/c"}, {"synth_url", "http://127.0.0.1:1/s"},
          {"timeout_ms", 200}, {"retries", 1}};
  const auto d = run_command("clean", Json{{"corpus", dir / "c.jsonl"}, {"out", dir / "d.jsonl"}, {"client_config", cc}});
  CHECK(d.body["counts"]["deferred"] == 1);
  CHECK(d.body["counts"]["cleaned"] == 2);
  const auto deferred = pipeline::read_lines(dir / "d.jsonl.deferred.jsonl");
  REQUIRE(deferred.size() == 1);
  CHECK(deferred[0] == corpus::serialize_dialogue(fixable));

  // The deferred file is itself a corpus: rerun it with a working client.
  const auto again = run_command("clean", Json{{"corpus", dir / "d.jsonl.deferred.jsonl"}, {"out", dir / "e.jsonl"}});
  CHECK(again.body["counts"]["cleaned"] == 1);
}

TEST_CASE("plan, eval and template commands") {
  TempDir dir("misc");
  const auto show = run_command("plan-show", Json::object());
  CHECK(show.body["stages"].size() == 6);
  const auto dir300 = run_command("plan-directive", Json{{"stage", "s1"}, {"step", 300}, {"total", 1000}});
  CHECK(dir300.body["trainable"] == Json::array({"audio_adapter"}));
  CHECK_THROWS_AS(run_command("plan-directive", Json{{"stage", "s1"}, {"step", 1}}), ArgumentError);

  spit(dir / "ref.txt", "hello world\nk\n");
  spit(dir / "hyp.txt", "hello word\nk\n");
  const auto w = run_command("eval-wer", Json{{"ref", dir / "ref.txt"}, {"hyp", dir / "hyp.txt"}});
  CHECK(w.body["rate"] == doctest::Approx(1.0 / 3));
  spit(dir / "hyp2.txt", "hello word\n");
  CHECK_THROWS_AS(run_command("eval-wer", Json{{"ref", dir / "ref.txt"}, {"hyp", dir / "hyp2.txt"}}), ArgumentError);

  spit(dir / "yes.txt", "yes\nYes.\nThe audio says hello\n");
  CHECK(run_command("eval-only-yes", Json{{"responses", dir / "yes.txt"}}).body["accuracy"] ==
        doctest::Approx(2.0 / 3));

  const auto t = run_command("templates-expand", Json{{"task", "asr/en"}, {"limit", 3}});
  CHECK(t.body["variants"].size() == 3);
  const auto loss = run_command("loss-check", Json{{"cases", 20}, {"seed", 1}});
  CHECK_FALSE(loss.failed);
}
