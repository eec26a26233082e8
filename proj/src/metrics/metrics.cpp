#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "util/error.hpp"
#include "util/parallel.hpp"
#include "util/utf8.hpp"

namespace forge::metrics {

double EditOps::rate() const {
  return static_cast<double>(distance()) / static_cast<double>(std::max<std::int64_t>(1, reference_length));
}

EditOps& EditOps::operator+=(const EditOps& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_length += o.reference_length;
  return *this;
}

template <class T>
EditOps edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  // Each cell holds (errors, substitutions); fewer errors wins, then more
  // substitutions. Maximal S fixes I and D too, so the counts do not depend
  // on argument order beyond the I/D swap.
  struct Cell {
    std::uint32_t err = 0;
    std::uint32_t sub = 0;
  };
  auto better = [](Cell a, Cell b) { return a.err < b.err || (a.err == b.err && a.sub > b.sub); };
  const std::size_t n = ref.size(), m = hyp.size();
  const std::size_t w = m + 1;
  std::vector<Cell> d((n + 1) * w);
  for (std::size_t j = 0; j <= m; ++j) d[j] = {static_cast<std::uint32_t>(j), 0};
  for (std::size_t i = 1; i <= n; ++i) {
    d[i * w] = {static_cast<std::uint32_t>(i), 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = ref[i - 1] == hyp[j - 1];
      Cell best = d[(i - 1) * w + j - 1];
      if (!same) ++best.err, ++best.sub;
      Cell del = d[(i - 1) * w + j];
      ++del.err;
      Cell ins = d[i * w + j - 1];
      ++ins.err;
      if (better(del, best)) best = del;
      if (better(ins, best)) best = ins;
      d[i * w + j] = best;
    }
  }
  EditOps ops;
  ops.reference_length = static_cast<std::int64_t>(n);
  ops.substitutions = d[n * w + m].sub;
  const auto errors = static_cast<std::int64_t>(d[n * w + m].err);
  // errors = S + I + D and I - D = m - n.
  const std::int64_t id = errors - ops.substitutions;
  const std::int64_t diff = static_cast<std::int64_t>(m) - static_cast<std::int64_t>(n);
  ops.insertions = (id + diff) / 2;
  ops.deletions = (id - diff) / 2;
  return ops;
}

template EditOps edit_distance<char>(const std::vector<char>&, const std::vector<char>&);
template EditOps edit_distance<char32_t>(const std::vector<char32_t>&, const std::vector<char32_t>&);
template EditOps edit_distance<std::string>(const std::vector<std::string>&, const std::vector<std::string>&);
template EditOps edit_distance<std::u32string>(const std::vector<std::u32string>&, const std::vector<std::u32string>&);

EditOps edit_distance_chars(std::string_view ref, std::string_view hyp) {
  const auto r = utf8::decode(ref);
  const auto h = utf8::decode(hyp);
  return edit_distance(std::vector<char32_t>(r.begin(), r.end()), std::vector<char32_t>(h.begin(), h.end()));
}

namespace {

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0x3000 ||
         c == 0x00A0;
}

bool is_punct(char32_t c) {
  if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                       (c >= 0x7B && c <= 0x7E);
  if (c >= 0x2010 && c <= 0x205E) return true;  // general punctuation: dashes, quotes, ellipsis
  if (c >= 0x3001 && c <= 0x3003) return true;  // 、。〃
  if (c >= 0x3008 && c <= 0x3011) return true;  // CJK brackets
  if (c >= 0x3014 && c <= 0x301F) return true;
  if (c == 0x30FB) return true;                 // katakana middle dot
  if (c >= 0xFF01 && c <= 0xFF0F) return true;  // fullwidth forms
  if (c >= 0xFF1A && c <= 0xFF20) return true;
  if (c >= 0xFF3B && c <= 0xFF40) return true;
  if (c >= 0xFF5B && c <= 0xFF65) return true;
  return c == 0x00A1 || c == 0x00BF || c == 0x00AB || c == 0x00BB || c == 0x00B7;
}

// Scripts written without spaces between words; each character is a word.
bool is_unspaced_script(char32_t c) {
  return (c >= 0x3040 && c <= 0x30FF) ||  // hiragana, katakana
         (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0xF900 && c <= 0xFAFF) ||
         (c >= 0x20000 && c <= 0x2FFFF);
}

char32_t fold(char32_t c) {
  if (c >= 0xFF01 && c <= 0xFF5E) c -= 0xFEE0;  // fullwidth ASCII variants
  if (c >= U'A' && c <= U'Z') return c + 32;
  return c;
}

std::u32string normalized_codepoints(std::string_view s, const NormalizeOptions& opt) {
  const auto cps = utf8::decode(s);
  if (!opt.enabled) return std::u32string(cps.begin(), cps.end());
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : cps) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (is_punct(c)) continue;
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(fold(c));
  }
  return out;
}

}  // namespace

std::string normalize(std::string_view s, const NormalizeOptions& opt) {
  std::string out;
  for (char32_t c : normalized_codepoints(s, opt)) utf8::append(out, c);
  return out;
}

std::vector<char32_t> cer_tokens(std::string_view s, const NormalizeOptions& opt) {
  std::vector<char32_t> out;
  for (char32_t c : normalized_codepoints(s, opt))
    if (!is_space(c)) out.push_back(c);
  return out;
}

std::vector<std::u32string> wer_tokens(std::string_view s, const NormalizeOptions& opt) {
  std::vector<std::u32string> out;
  std::u32string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char32_t c : normalized_codepoints(s, opt)) {
    if (is_space(c)) {
      flush();
    } else if (is_unspaced_script(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

EditOps cer_ops(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt) {
  return edit_distance(cer_tokens(ref, opt), cer_tokens(hyp, opt));
}

EditOps wer_ops(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt) {
  return edit_distance(wer_tokens(ref, opt), wer_tokens(hyp, opt));
}

double cer(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt) {
  return cer_ops(ref, hyp, opt).rate();
}

double wer(std::string_view ref, std::string_view hyp, const NormalizeOptions& opt) {
  return wer_ops(ref, hyp, opt).rate();
}

CorpusRate corpus_rate(RateKind kind, const std::vector<std::string>& refs, const std::vector<std::string>& hyps,
                       const NormalizeOptions& opt, unsigned jobs) {
  if (refs.size() != hyps.size())
    throw ArgumentError("reference and hypothesis counts differ: " + std::to_string(refs.size()) + " vs " +
                        std::to_string(hyps.size()));
  CorpusRate r;
  r.per_utterance.resize(refs.size());
  parallel_for(refs.size(), jobs, [&](std::size_t i) {
    r.per_utterance[i] = kind == RateKind::kCer ? cer_ops(refs[i], hyps[i], opt) : wer_ops(refs[i], hyps[i], opt);
  });
  for (const auto& e : r.per_utterance) r.pooled += e;
  return r;
}

bool only_yes_pass(std::string_view response) {
  auto cps = utf8::decode(response);
  std::size_t b = 0, e = cps.size();
  auto trim = [&] {
    while (b < e && is_space(cps[b])) ++b;
    while (e > b && is_space(cps[e - 1])) --e;
  };
  trim();
  while (e > b && is_punct(cps[e - 1])) --e;
  trim();
  if (e - b != 3) return false;
  return fold(cps[b]) == U'y' && fold(cps[b + 1]) == U'e' && fold(cps[b + 2]) == U's';
}

double only_yes_accuracy(const std::vector<std::string>& responses) {
  if (responses.empty()) throw ArgumentError("only-yes accuracy is undefined for an empty response list");
  const auto passes = std::count_if(responses.begin(), responses.end(), [](const std::string& s) { return only_yes_pass(s); });
  return static_cast<double>(passes) / static_cast<double>(responses.size());
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || a.size() != b.size()) throw ArgumentError("cosine: vectors must have equal nonzero length");
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ArgumentError("cosine: non-finite entry");
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) throw ArgumentError("cosine: zero vector");
  const long double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return static_cast<double>(std::clamp<long double>(c, -1.0L, 1.0L));
}

AblationGap ablation_gap(const AblationCell& a2t, const AblationCell& a2a) {
  return {a2a.similarity - a2t.similarity, a2a.consistency - a2t.consistency};
}

Json edit_ops_to_json(const EditOps& e) {
  Json j;
  j["substitutions"] = e.substitutions;
  j["insertions"] = e.insertions;
  j["deletions"] = e.deletions;
  j["reference_length"] = e.reference_length;
  j["errors"] = e.distance();
  j["rate"] = e.rate();
  return j;
}

}  // namespace forge::metrics
