// forge: command-line front end over the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "forge/forge.h"

namespace {

using Json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags bound to one subcommand. Values are copied into the request only
// when the flag was given, so config-file values survive unless overridden.
struct Bound {
  CLI::Option* opt;
  std::string key;
  std::function<Json()> value;
};

struct Command {
  std::string name;  // pipeline command name
  CLI::App* app = nullptr;
  std::vector<Bound> bound;
  std::string config_path;
  std::optional<std::string> seed;
  std::optional<int> jobs;
};

template <class T>
void bind(Command& c, const std::string& flag, const std::string& key, const std::string& help,
          std::shared_ptr<T> store = std::make_shared<T>()) {
  auto* o = c.app->add_option(flag, *store, help);
  c.bound.push_back({o, key, [store] { return Json(*store); }});
}

void bind_flag(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  auto store = std::make_shared<bool>(false);
  auto* o = c.app->add_flag(flag, *store, help);
  c.bound.push_back({o, key, [store] { return Json(*store); }});
}

void add_common(Command& c, bool seeded) {
  c.app->add_option("--config", c.config_path, "JSON config file; flags take precedence")->check(CLI::ExistingFile);
  if (seeded) c.app->add_option("--seed", c.seed, "master seed (unsigned 64-bit)");
  c.app->add_option("--jobs", c.jobs, "worker threads (default: FORGE_JOBS or 1)")->check(CLI::Range(1, 1024));
}

Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open " + path);
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

Json build_request(const Command& c) {
  Json req = Json::object();
  if (!c.config_path.empty()) {
    Json cfg = read_json_file(c.config_path);
    if (!cfg.is_object()) throw UsageError(c.config_path + ": config must be a JSON object");
    for (auto it = cfg.begin(); it != cfg.end(); ++it)
      if (!it.value().is_object() || it.key() == "client_config") req[it.key()] = it.value();
    // A section named after the command overrides the shared keys.
    if (cfg.contains(c.name) && cfg[c.name].is_object())
      for (auto it = cfg[c.name].begin(); it != cfg[c.name].end(); ++it) req[it.key()] = it.value();
  }
  if (!req.contains("jobs")) {
    if (const char* env = std::getenv("FORGE_JOBS"); env && *env) {
      try {
        req["jobs"] = std::stoi(env);
      } catch (const std::exception&) {
        throw UsageError("FORGE_JOBS must be an integer");
      }
    }
  }
  if (c.jobs) req["jobs"] = *c.jobs;
  if (c.seed) req["seed"] = *c.seed;
  for (const auto& b : c.bound)
    if (b.opt->count() > 0) req[b.key] = b.value();
  if (req.contains("client_config") && req["client_config"].is_string())
    req["client_config"] = read_json_file(req["client_config"].get<std::string>());
  return req;
}

int run(const Command& c) {
  const Json req = build_request(c);
  forge_context* ctx = nullptr;
  if (forge_context_new(&ctx) != FORGE_OK) {
    std::cerr << "forge: error: out of memory\n";
    return kExitFailure;
  }
  char* out = nullptr;
  const auto status = forge_run(ctx, c.name.c_str(), req.dump().c_str(), &out);
  if (out) {
    std::cout << Json::parse(out).dump(2) << "\n";
    forge_string_free(out);
  }
  int code = kExitOk;
  if (status == FORGE_ERR_ARGUMENT) {
    std::cerr << "forge: usage error: " << forge_last_error(ctx) << "\n";
    code = kExitUsage;
  } else if (status != FORGE_OK) {
    std::cerr << "forge: " << forge_status_name(status) << ": " << forge_last_error(ctx) << "\n";
    code = kExitFailure;
  }
  forge_context_free(ctx);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: dialogue-corpus compiler and verification toolkit"};
  app.set_version_flag("--version", forge_version());
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](CLI::App* parent, const std::string& sub, const std::string& help, const std::string& name,
                  bool seeded) -> Command& {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->app = parent->add_subcommand(sub, help);
    add_common(*c, seeded);
    commands.push_back(std::move(c));
    return *commands.back();
  };

  {
    auto& c = make(&app, "validate", "Parse and validate a corpus", "validate", false);
    bind<std::string>(c, "--corpus", "corpus", "corpus file (JSONL)");
  }
  {
    auto& c = make(&app, "build-thinker", "Compile modality-interleaved thinker sequences", "build-thinker", true);
    bind<std::string>(c, "--corpus", "corpus", "corpus file (JSONL)");
    bind<std::string>(c, "--out", "out", "output file (JSONL)");
    bind<double>(c, "--p-user", "p_user", "probability a user turn is rendered as speech");
    bind<double>(c, "--p-assistant", "p_assistant", "probability an assistant segment is rendered as speech");
    bind_flag(c, "--user-draw-per-dialogue", "user_draw_per_dialogue", "one user-side draw per dialogue");
  }
  {
    auto& c = make(&app, "build-talker", "Assemble talker token sequences", "build-talker", true);
    bind<std::string>(c, "--corpus", "corpus", "corpus file (JSONL)");
    bind<std::string>(c, "--out", "out", "output file (JSONL)");
    bind<std::string>(c, "--mode", "mode", "dialogue | long_text | standard_sentence | auto");
    bind<std::string>(c, "--ratio", "ratio", "text:speech chunk sizes, e.g. 5:15");
    bind_flag(c, "--randomized-ratio", "randomized_ratio", "draw chunk sizes per block");
    bind<std::string>(c, "--registry", "registry", "special-token registry to use");
    bind<std::string>(c, "--registry-out", "registry_out", "write the special-token registry here");
  }
  {
    auto& c = make(&app, "clean", "Route dialogues through the cleaning branches", "clean", true);
    bind<std::string>(c, "--corpus", "corpus", "corpus file (JSONL)");
    bind<std::string>(c, "--out", "out", "cleaned corpus output (JSONL)");
    bind<std::string>(c, "--client", "client", "mock | http");
    bind<std::string>(c, "--client-config", "client_config", "client config file (JSON)");
    bind<int>(c, "--retries", "retries", "extra attempts per client call");
    bind_flag(c, "--synthesize-backfill", "synthesize_backfill", "synthesize audio for backfilled turns");
  }
  {
    auto& c = make(&app, "stats", "Hours, tokens, languages and flags of a corpus", "stats", false);
    bind<std::string>(c, "--corpus", "corpus", "corpus file (JSONL)");
    bind<std::string>(c, "--out", "out", "also write the report here");
  }
  {
    auto& c = make(&app, "generate", "Write a synthetic corpus", "generate", true);
    bind<std::string>(c, "--out", "out", "output corpus (JSONL)");
    bind<std::size_t>(c, "--count", "count", "number of dialogues");
    bind<int>(c, "--min-turns", "min_turns", "fewest turns per dialogue");
    bind<int>(c, "--max-turns", "max_turns", "most turns per dialogue");
    bind<double>(c, "--p-audio", "p_audio", "probability a turn carries audio");
    bind<double>(c, "--p-correctable", "p_correctable", "share of correctable-contradiction dialogues");
    bind<double>(c, "--p-severe", "p_severe", "share of severe-contradiction dialogues");
    bind<double>(c, "--p-missing-context", "p_missing_context", "share of missing-context dialogues");
    bind<std::string>(c, "--source", "source", "restrict to one source");
    bind_flag(c, "--assistant-initial-fragments", "assistant_initial_fragments",
              "missing-context dialogues start with the assistant");
  }
  {
    auto* templates = app.add_subcommand("templates", "Instruction template registry");
    templates->require_subcommand(1);
    auto& c = make(templates, "expand", "Expand a task's prompt grammar", "templates-expand", false);
    bind<std::string>(c, "--task", "task", "task id, e.g. asr/en");
    bind<long long>(c, "--limit", "limit", "maximum variants");
    bind<std::string>(c, "--registry", "registry", "task registry file (JSON)");
  }
  {
    auto* plan = app.add_subcommand("plan", "Training schedule");
    plan->require_subcommand(1);
    auto& show = make(plan, "show", "Print the plan", "plan-show", false);
    bind<std::string>(show, "--plan", "plan", "plan file (JSON); default is the built-in plan");
    auto& dir = make(plan, "directive", "Trainable groups, lr and budget at a step", "plan-directive", false);
    bind<std::string>(dir, "--plan", "plan", "plan file (JSON)");
    bind<std::string>(dir, "--stage", "stage", "stage id, e.g. s1");
    bind<long long>(dir, "--step", "step", "1-based step");
    bind<long long>(dir, "--total", "total", "total steps of the stage");
    auto& budget = make(plan, "budget", "Check declared budgets against corpus stats", "plan-budget", false);
    bind<std::string>(budget, "--plan", "plan", "plan file (JSON)");
    bind<std::string>(budget, "--stats", "stats", "stats file (JSON)");
  }
  {
    auto& c = make(&app, "loss-check", "Finite-difference check of the loss gradients", "loss-check", true);
    bind<long long>(c, "--cases", "cases", "random cases");
  }
  {
    auto* eval = app.add_subcommand("eval", "Evaluation metrics");
    eval->require_subcommand(1);
    for (const char* kind : {"cer", "wer"}) {
      auto& c = make(eval, kind, std::string("Pooled ") + kind + " over line-aligned files", std::string("eval-") + kind,
                     false);
      bind<std::string>(c, "--ref", "ref", "reference transcripts, one per line");
      bind<std::string>(c, "--hyp", "hyp", "hypotheses, one per line");
      auto raw = std::make_shared<bool>(false);
      auto* o = c.app->add_flag("--raw", *raw, "score without normalization");
      c.bound.push_back({o, "normalize", [raw] { return Json(!*raw); }});
    }
    auto& yes = make(eval, "only-yes", "Strict accuracy of the only-yes probe", "eval-only-yes", false);
    bind<std::string>(yes, "--responses", "responses", "model responses, one per line");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  for (const auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      return run(*c);
    } catch (const UsageError& e) {
      std::cerr << "forge: usage error: " << e.what() << "\n";
      return kExitUsage;
    }
  }
  std::cerr << app.help();
  return kExitUsage;
}
