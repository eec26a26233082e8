#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cleaning/clients.hpp"
#include "corpus/corpus.hpp"
#include "util/ojson.hpp"
#include "util/report.hpp"

namespace forge::cleaning {

enum class Branch { kLogicCorrection, kInformationPreservation, kContextCompletion, kPassthrough };
std::string_view to_string(Branch b);

// Which client call produced which field.
struct ProvenanceEntry {
  std::string call_id;
  std::string client;
  std::string operation;
  std::int64_t turn = -1;  // -1 for dialogue-level calls
  std::string field;
  int attempts = 1;
};

struct CleaningOutcome {
  Branch branch = Branch::kPassthrough;
  corpus::Dialogue dialogue;
  std::vector<corpus::TurnSpan> masked_spans;
  std::vector<ProvenanceEntry> provenance;

  // A client kept failing after every retry; `dialogue` is the untouched input.
  bool deferred = false;
  std::string deferred_reason;
  int attempts = 0;

  // The repaired dialogue failed validation; `dialogue` is the untouched input.
  bool rejected = false;
  ValidationReport rejection;
};

struct CleaningOptions {
  int retries = 3;  // extra attempts after the first
  bool synthesize_backfill = false;
};

// severe > missing_context > correctable; anything else passes through.
Branch route(const corpus::Dialogue& d);

CleaningOutcome apply_logic_correction(const corpus::Dialogue& d, CorrectorClient& corrector, SynthClient& synth,
                                       std::uint64_t seed, const CleaningOptions& opts = {});

// Throws ArgumentError when a severe flag has no spans.
CleaningOutcome apply_masking(const corpus::Dialogue& d);

CleaningOutcome apply_context_completion(const corpus::Dialogue& d, CorrectorClient& corrector, SynthClient& synth,
                                         std::uint64_t seed, const CleaningOptions& opts = {});

CleaningOutcome clean_dialogue(const corpus::Dialogue& d, CorrectorClient& corrector, SynthClient& synth,
                               std::uint64_t seed, const CleaningOptions& opts = {});

// Outcomes in input order, independent of `jobs`.
std::vector<CleaningOutcome> clean_corpus(const std::vector<corpus::Dialogue>& dialogues,
                                          CorrectorClient& corrector, SynthClient& synth, std::uint64_t seed,
                                          const CleaningOptions& opts, unsigned jobs);

Json outcome_summary_json(const CleaningOutcome& o);

}  // namespace forge::cleaning
