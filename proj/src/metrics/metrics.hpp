#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "util/ojson.hpp"

namespace forge::metrics {

struct EditOps {
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;
  std::int64_t reference_length = 0;

  std::int64_t distance() const { return substitutions + insertions + deletions; }
  // Errors over reference length; an empty reference divides by 1.
  double rate() const;
  EditOps& operator+=(const EditOps& o);
};

// Minimal unit-cost alignment; among optimal alignments, the one with the
// most substitutions.
template <class T>
EditOps edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp);

EditOps edit_distance_chars(std::string_view ref, std::string_view hyp);

struct NormalizeOptions {
  bool enabled = true;  // false: raw mode, score the strings as given
};

// Lowercase, strip punctuation, collapse whitespace.
std::string normalize(std::string_view s, const NormalizeOptions& opt = {});

std::vector<char32_t> cer_tokens(std::string_view s, const NormalizeOptions& opt = {});
std::vector<std::u32string> wer_tokens(std::string_view s, const NormalizeOptions& opt = {});

EditOps cer_ops(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt = {});
EditOps wer_ops(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt = {});
double cer(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt = {});
double wer(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt = {});

enum class RateKind { kCer, kWer };

struct CorpusRate {
  EditOps pooled;
  std::vector<EditOps> per_utterance;
  double rate() const { return pooled.rate(); }
};

// Pooled errors over pooled reference length. Throws ArgumentError if the
// two lists differ in length.
CorpusRate corpus_rate(RateKind kind, const std::vector<std::string>& refs, const std::vector<std::string>& hyps,
                       const NormalizeOptions& opt = {}, unsigned jobs = 1);

bool only_yes_pass(std::string_view response);
// Throws ArgumentError on an empty list.
double only_yes_accuracy(const std::vector<std::string>& responses);

// Throws ArgumentError on length mismatch, empty input or a zero vector.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct AblationCell {
  double similarity = 0.0;   // [-1, 1]
  double consistency = 0.0;  // fraction in [0, 1]
};

struct AblationGap {
  double similarity = 0.0;
  double consistency = 0.0;
};

// Componentwise a2a - a2t.
AblationGap ablation_gap(const AblationCell& a2t, const AblationCell& a2a);

Json edit_ops_to_json(const EditOps& e);

}  // namespace forge::metrics
