#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "util/ojson.hpp"

namespace forge::pipeline {

std::string_view tool_version();

struct Manifest {
  std::string command;
  std::uint64_t master_seed = 0;
  Json config = Json::object();
  std::map<std::string, std::string> inputs;   // basename -> sha256
  std::map<std::string, std::string> outputs;  // basename -> sha256
  Json counts = Json::object();
  std::string created_at;  // not part of any hash or comparison
};

// SHA-256 over the compact serialization of `config`.
std::string config_hash(const Json& config);
Json manifest_to_json(const Manifest& m);
// Same as manifest_to_json without `created_at`.
Json manifest_identity(const Manifest& m);

struct CommandResult {
  Json body;
  bool failed = false;  // a check ran and did not pass
};

// Runs one command from a JSON request. Command names: validate,
// build-thinker, build-talker, clean, stats, generate, templates-expand,
// plan-show, plan-directive, plan-budget, loss-check, eval-cer, eval-wer,
// eval-only-yes. Throws forge::Error subclasses on bad requests or I/O errors.
CommandResult run_command(std::string_view name, const Json& request);

const std::vector<std::string>& command_names();

// Lines of a UTF-8 text file; a trailing newline does not add an empty line.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace forge::pipeline
