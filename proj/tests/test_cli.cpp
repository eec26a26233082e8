#include <doctest.h>
#include <json.hpp>

#include <string>

#include "cli_runner.hpp"

using Json = nlohmann::ordered_json;
using forge::test::run_cli;
using forge::test::slurp;
using forge::test::spit;
using forge::test::TempDir;

namespace {

std::string q(const std::string& s) { return "'" + s + "'"; }

}  // namespace

TEST_CASE("exit codes") {
  TempDir dir("cli-codes");
  CHECK(run_cli(dir, "").code == 2);
  CHECK(run_cli(dir, "nonsense").code == 2);
  const auto v = run_cli(dir, "--version");
  CHECK(v.code == 0);
  CHECK(v.out.find("0.4.0") != std::string::npos);
  CHECK(run_cli(dir, "validate --help").code == 0);

  REQUIRE(run_cli(dir, "generate --count 20 --seed 5 --out " + q(dir / "c.jsonl")).code == 0);
  const auto ok = run_cli(dir, "validate --corpus " + q(dir / "c.jsonl"));
  CHECK(ok.code == 0);
  CHECK(Json::parse(ok.out)["valid"] == true);

  spit(dir / "bad.jsonl", slurp(dir / "c.jsonl") + "{oops\n");
  const auto bad = run_cli(dir, "validate --corpus " + q(dir / "bad.jsonl"));
  CHECK(bad.code == 1);
  CHECK(Json::parse(bad.out)["valid"] == false);
  CHECK(bad.err.find("validation") != std::string::npos);

  CHECK(run_cli(dir, "validate").code == 2);
  CHECK(run_cli(dir, "validate --corpus " + q(dir / "nope.jsonl")).code == 1);
  CHECK(run_cli(dir, "validate --jobs 0 --corpus " + q(dir / "c.jsonl")).code == 2);
  CHECK(run_cli(dir, "validate --jobs many --corpus " + q(dir / "c.jsonl")).code == 2);
  CHECK(run_cli(dir, "build-thinker --seed abc --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "t")).code == 2);
  CHECK(run_cli(dir, "build-thinker --p-user 2 --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "t")).code == 2);
  CHECK(run_cli(dir, "build-talker --ratio 5-15 --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "t")).code == 2);
  CHECK(run_cli(dir, "plan directive --stage s9 --step 1").code == 2);
  CHECK(run_cli(dir, "eval wer --ref " + q(dir / "x") + " --hyp " + q(dir / "y")).code == 1);
}

TEST_CASE("config file, section overrides, flags and FORGE_JOBS") {
  TempDir dir("cli-config");
  REQUIRE(run_cli(dir, "generate --count 10 --seed 9 --p-audio 1 --out " + q(dir / "c.jsonl")).code == 0);
  auto p_user = [&](const std::string& extra, const std::string& env = "") {
    const auto r = run_cli(dir, "build-thinker --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "t") + " " + extra, env);
    REQUIRE(r.code == 0);
    return Json::parse(r.out)["config"]["policy"]["p_user_speech"].get<double>();
  };
  CHECK(p_user("") == 0.5);

  spit(dir / "shared.json", R"({"p_user": 0.1})");
  CHECK(p_user("--config " + q(dir / "shared.json")) == 0.1);
  spit(dir / "section.json", R"({"p_user": 0.1, "build-thinker": {"p_user": 0.2}})");
  CHECK(p_user("--config " + q(dir / "section.json")) == 0.2);
  CHECK(p_user("--config " + q(dir / "section.json") + " --p-user 0.3") == 0.3);

  // Seeds: the config value, unless a flag is given.
  spit(dir / "seeded.json", R"({"seed": "0xff"})");
  const auto s = run_cli(dir, "build-thinker --config " + q(dir / "seeded.json") + " --corpus " + q(dir / "c.jsonl") +
                                  " --out " + q(dir / "t"));
  CHECK(Json::parse(s.out)["master_seed"] == 255);
  const auto s2 = run_cli(dir, "build-thinker --seed 3 --config " + q(dir / "seeded.json") + " --corpus " +
                                   q(dir / "c.jsonl") + " --out " + q(dir / "t"));
  CHECK(Json::parse(s2.out)["master_seed"] == 3);

  // FORGE_JOBS is read only when neither flag nor config sets jobs.
  const auto corpus = " --corpus " + q(dir / "c.jsonl");
  CHECK(run_cli(dir, "validate" + corpus, "FORGE_JOBS=4").code == 0);
  CHECK(run_cli(dir, "validate" + corpus, "FORGE_JOBS=0").code == 2);
  CHECK(run_cli(dir, "validate" + corpus, "FORGE_JOBS=lots").code == 2);
  CHECK(run_cli(dir, "validate --jobs 2" + corpus, "FORGE_JOBS=0").code == 0);
  spit(dir / "jobs.json", R"({"jobs": 2})");
  CHECK(run_cli(dir, "validate --config " + q(dir / "jobs.json") + corpus, "FORGE_JOBS=lots").code == 0);
  spit(dir / "badjobs.json", R"({"jobs": 0})");
  CHECK(run_cli(dir, "validate --config " + q(dir / "badjobs.json") + corpus).code == 2);
  CHECK(run_cli(dir, "validate --jobs 3 --config " + q(dir / "badjobs.json") + corpus).code == 0);

  spit(dir / "notobject.json", "[1]");
  CHECK(run_cli(dir, "validate --config " + q(dir / "notobject.json") + corpus).code == 2);
  CHECK(run_cli(dir, "validate --config " + q(dir / "missing.json") + corpus).code == 2);
}

TEST_CASE("subcommand outputs") {
  TempDir dir("cli-out");
  spit(dir / "ref.txt", "你好世界\n");
  spit(dir / "hyp.txt", "你好视界\n");
  const auto cer = run_cli(dir, "eval cer --ref " + q(dir / "ref.txt") + " --hyp " + q(dir / "hyp.txt"));
  REQUIRE(cer.code == 0);
  CHECK(Json::parse(cer.out)["rate"] == 0.25);

  const auto show = run_cli(dir, "plan show");
  REQUIRE(show.code == 0);
  CHECK(Json::parse(show.out)["stages"].size() == 6);

  const auto t = run_cli(dir, "templates expand --task asr/zh --limit 2");
  REQUIRE(t.code == 0);
  CHECK(Json::parse(t.out)["variants"].size() == 2);

  const auto lc = run_cli(dir, "loss-check --cases 5 --seed 2");
  CHECK(lc.code == 0);
  CHECK(Json::parse(lc.out)["pass"] == true);

  REQUIRE(run_cli(dir, "generate --count 30 --seed 1 --out " + q(dir / "c.jsonl")).code == 0);
  const auto reg = run_cli(dir, "build-talker --seed 1 --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "k.jsonl") +
                                    " --registry-out " + q(dir / "reg.json"));
  CHECK(reg.code == 0);
  const auto reuse = run_cli(dir, "build-talker --seed 1 --corpus " + q(dir / "c.jsonl") + " --out " +
                                      q(dir / "k2.jsonl") + " --registry " + q(dir / "reg.json"));
  CHECK(reuse.code == 0);
  CHECK(slurp(dir / "k.jsonl") == slurp(dir / "k2.jsonl"));
}
