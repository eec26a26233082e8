#include "forge/forge.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "caption/caption.hpp"
#include "corpus/corpus.hpp"
#include "loss/loss.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/pipeline.hpp"
#include "thinker/thinker.hpp"
#include "util/error.hpp"

struct forge_context {
  std::string last_error;
};

struct forge_corpus {
  forge::corpus::ParsedCorpus parsed;
};

namespace {

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size());
  p[s.size()] = '\0';
  return p;
}

// Runs `fn`, mapping exceptions to status codes and recording the message.
template <class Fn>
forge_status guard(forge_context* ctx, Fn&& fn) {
  auto fail = [&](forge_status s, const char* what) {
    if (ctx) ctx->last_error = what;
    return s;
  };
  try {
    if (ctx) ctx->last_error.clear();
    return fn();
  } catch (const forge::NoReferenceError& e) {
    return fail(FORGE_ERR_NO_REFERENCE, e.what());
  } catch (const forge::ArgumentError& e) {
    return fail(FORGE_ERR_ARGUMENT, e.what());
  } catch (const forge::IoError& e) {
    return fail(FORGE_ERR_IO, e.what());
  } catch (const forge::ParseError& e) {
    return fail(FORGE_ERR_PARSE, e.what());
  } catch (const forge::CompileError& e) {
    return fail(FORGE_ERR_COMPILE, e.what());
  } catch (const forge::ClientError& e) {
    return fail(FORGE_ERR_CLIENT, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(FORGE_ERR_PARSE, e.what());
  } catch (const std::exception& e) {
    return fail(FORGE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FORGE_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* name) {
  if (!p) throw forge::ArgumentError(std::string(name) + " is NULL");
}

forge::Json parse_json(const char* s, const char* what) {
  need(s, what);
  try {
    return forge::Json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw forge::ParseError(std::string(what) + ": " + e.what());
  }
}

forge::Json violations_json(const forge::ValidationReport& r) {
  forge::Json v = forge::Json::array();
  for (const auto& x : r) v.push_back(forge::Json{{"path", x.path}, {"message", x.message}});
  return v;
}

forge::loss::Mask to_mask(const uint8_t* mask, size_t rows) {
  need(mask, "mask");
  forge::loss::Mask m(rows);
  for (size_t i = 0; i < rows; ++i) m[i] = mask[i] != 0;
  return m;
}

forge::loss::Matrix to_matrix(const double* v, size_t rows, size_t cols, const char* what) {
  need(v, what);
  return forge::loss::Matrix(rows, cols, std::vector<double>(v, v + rows * cols));
}

}  // namespace

extern "C" {

const char* forge_version(void) {
  static const std::string v(forge::pipeline::tool_version());
  return v.c_str();
}

const char* forge_status_name(forge_status s) {
  switch (s) {
    case FORGE_OK: return "ok";
    case FORGE_ERR_ARGUMENT: return "argument";
    case FORGE_ERR_IO: return "io";
    case FORGE_ERR_PARSE: return "parse";
    case FORGE_ERR_VALIDATION: return "validation";
    case FORGE_ERR_COMPILE: return "compile";
    case FORGE_ERR_CLIENT: return "client";
    case FORGE_ERR_NO_REFERENCE: return "no_reference";
    case FORGE_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

forge_status forge_context_new(forge_context** out) {
  if (!out) return FORGE_ERR_ARGUMENT;
  *out = new (std::nothrow) forge_context();
  return *out ? FORGE_OK : FORGE_ERR_INTERNAL;
}

void forge_context_free(forge_context* ctx) { delete ctx; }

const char* forge_last_error(const forge_context* ctx) { return ctx ? ctx->last_error.c_str() : ""; }

void forge_string_free(char* s) { std::free(s); }

forge_status forge_run(forge_context* ctx, const char* command, const char* request_json, char** result_json) {
  return guard(ctx, [&] {
    need(command, "command");
    need(result_json, "result_json");
    *result_json = nullptr;
    const auto req = request_json ? parse_json(request_json, "request") : forge::Json::object();
    const auto r = forge::pipeline::run_command(command, req);
    *result_json = dup(r.body.dump());
    if (r.failed) {
      if (ctx) ctx->last_error = std::string(command) + ": check failed";
      return FORGE_ERR_VALIDATION;
    }
    return FORGE_OK;
  });
}

forge_status forge_corpus_load(forge_context* ctx, const char* path, forge_corpus** out) {
  return guard(ctx, [&] {
    need(path, "path");
    need(out, "out");
    auto c = std::make_unique<forge_corpus>();
    c->parsed = forge::corpus::parse_corpus(path);
    *out = c.release();
    return FORGE_OK;
  });
}

forge_status forge_corpus_parse(forge_context* ctx, const char* jsonl, size_t len, forge_corpus** out) {
  return guard(ctx, [&] {
    need(jsonl, "jsonl");
    need(out, "out");
    auto c = std::make_unique<forge_corpus>();
    c->parsed = forge::corpus::parse_corpus_text(std::string_view(jsonl, len));
    *out = c.release();
    return FORGE_OK;
  });
}

void forge_corpus_free(forge_corpus* c) { delete c; }

size_t forge_corpus_size(const forge_corpus* c) { return c ? c->parsed.dialogues.size() : 0; }

size_t forge_corpus_reject_count(const forge_corpus* c) { return c ? c->parsed.rejects.size() : 0; }

forge_status forge_corpus_validate(forge_context* ctx, const forge_corpus* c, char** report_json) {
  return guard(ctx, [&] {
    need(c, "corpus");
    need(report_json, "report_json");
    const auto report = forge::corpus::validate_corpus(c->parsed.dialogues);
    forge::Json rejects = forge::Json::array();
    for (const auto& r : c->parsed.rejects) rejects.push_back(forge::Json{{"line", r.line}, {"reason", r.reason}});
    const bool ok = report.empty() && c->parsed.rejects.empty();
    forge::Json j{{"valid", ok}, {"rejects", std::move(rejects)}, {"violations", violations_json(report)}};
    *report_json = dup(j.dump());
    if (!ok) {
      if (ctx) ctx->last_error = "corpus is invalid";
      return FORGE_ERR_VALIDATION;
    }
    return FORGE_OK;
  });
}

forge_status forge_corpus_serialize(forge_context* ctx, const forge_corpus* c, char** jsonl) {
  return guard(ctx, [&] {
    need(c, "corpus");
    need(jsonl, "jsonl");
    *jsonl = dup(forge::corpus::serialize_corpus(c->parsed.dialogues));
    return FORGE_OK;
  });
}

forge_status forge_corpus_compile_thinker(forge_context* ctx, const forge_corpus* c, size_t index, uint64_t seed,
                                          double p_user, double p_assistant, char** sequence_json) {
  return guard(ctx, [&] {
    need(c, "corpus");
    need(sequence_json, "sequence_json");
    if (index >= c->parsed.dialogues.size()) throw forge::ArgumentError("dialogue index out of range");
    forge::thinker::InterleavePolicy p;
    p.p_user_speech = p_user;
    p.p_assistant_segment_speech = p_assistant;
    forge::thinker::check_policy(p);
    const auto& d = c->parsed.dialogues[index];
    const auto report = forge::corpus::validate_dialogue(d);
    if (!report.empty())
      throw forge::CompileError("dialogue " + d.id + " is invalid: " + report.front().path + ": " +
                                report.front().message);
    *sequence_json = dup(forge::thinker::serialize_sequence(forge::thinker::interleave_dialogue(d, p, seed)));
    return FORGE_OK;
  });
}

forge_status forge_downsample_frames(forge_context* ctx, int64_t n_frames, int64_t* out) {
  return guard(ctx, [&] {
    need(out, "out");
    *out = forge::corpus::downsample_frames(n_frames);
    return FORGE_OK;
  });
}

forge_status forge_tokens_for_hours(forge_context* ctx, double hours, double rate_hz, int64_t* out) {
  return guard(ctx, [&] {
    need(out, "out");
    *out = forge::corpus::tokens_for_hours(hours, rate_hz);
    return FORGE_OK;
  });
}

forge_status forge_caption_validate(forge_context* ctx, const char* caption_json, char** report_json) {
  return guard(ctx, [&] {
    need(report_json, "report_json");
    const auto c = forge::caption::caption_from_json(parse_json(caption_json, "caption"));
    const auto report = forge::caption::validate_caption(c);
    *report_json = dup(forge::Json{{"valid", report.empty()}, {"violations", violations_json(report)}}.dump());
    if (!report.empty()) {
      if (ctx) ctx->last_error = "caption is invalid";
      return FORGE_ERR_VALIDATION;
    }
    return FORGE_OK;
  });
}

forge_status forge_caption_render(forge_context* ctx, const char* caption_json, uint64_t seed, char** text) {
  return guard(ctx, [&] {
    need(text, "text");
    const auto c = forge::caption::caption_from_json(parse_json(caption_json, "caption"));
    *text = dup(forge::caption::render_caption(c, seed));
    return FORGE_OK;
  });
}

forge_status forge_caption_extract(forge_context* ctx, const char* text, char** caption_json) {
  return guard(ctx, [&] {
    need(text, "text");
    need(caption_json, "caption_json");
    forge::caption::CaptionRecord c;
    for (auto& [attr, tag] : forge::caption::extract_tags(text)) c.add(attr, tag);
    *caption_json = dup(forge::caption::caption_to_json(c).dump());
    return FORGE_OK;
  });
}

forge_status forge_cer(forge_context* ctx, const char* ref, const char* hyp, double* rate) {
  return guard(ctx, [&] {
    need(ref, "ref");
    need(hyp, "hyp");
    need(rate, "rate");
    *rate = forge::metrics::cer(ref, hyp);
    return FORGE_OK;
  });
}

forge_status forge_wer(forge_context* ctx, const char* ref, const char* hyp, double* rate) {
  return guard(ctx, [&] {
    need(ref, "ref");
    need(hyp, "hyp");
    need(rate, "rate");
    *rate = forge::metrics::wer(ref, hyp);
    return FORGE_OK;
  });
}

forge_status forge_only_yes_accuracy(forge_context* ctx, const char* const* responses, size_t n, double* accuracy) {
  return guard(ctx, [&] {
    need(accuracy, "accuracy");
    if (n > 0) need(responses, "responses");
    std::vector<std::string> v;
    v.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      need(responses[i], "response");
      v.emplace_back(responses[i]);
    }
    *accuracy = forge::metrics::only_yes_accuracy(v);
    return FORGE_OK;
  });
}

forge_status forge_cosine(forge_context* ctx, const double* a, const double* b, size_t n, double* out) {
  return guard(ctx, [&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = forge::metrics::cosine(std::vector<double>(a, a + n), std::vector<double>(b, b + n));
    return FORGE_OK;
  });
}

forge_status forge_masked_ce(forge_context* ctx, const double* logits, size_t rows, size_t cols,
                             const int64_t* targets, const uint8_t* mask, double* loss, double* grad) {
  return guard(ctx, [&] {
    need(targets, "targets");
    need(loss, "loss");
    const auto m = to_matrix(logits, rows, cols, "logits");
    const auto r = forge::loss::masked_ce(m, std::vector<std::int64_t>(targets, targets + rows), to_mask(mask, rows));
    *loss = r.loss;
    if (grad) std::memcpy(grad, r.grad.values().data(), sizeof(double) * rows * cols);
    return FORGE_OK;
  });
}

forge_status forge_kl_distill(forge_context* ctx, const double* teacher, const double* student, size_t rows,
                              size_t cols, const uint8_t* mask, double temperature, int reverse, double* loss,
                              double* grad) {
  return guard(ctx, [&] {
    need(loss, "loss");
    forge::loss::KlOptions opt;
    opt.temperature = temperature;
    opt.direction = reverse ? forge::loss::KlDirection::kReverse : forge::loss::KlDirection::kForward;
    const auto r = forge::loss::kl_distill(to_matrix(teacher, rows, cols, "teacher"),
                                           to_matrix(student, rows, cols, "student"), to_mask(mask, rows), opt);
    *loss = r.loss;
    if (grad) std::memcpy(grad, r.grad.values().data(), sizeof(double) * rows * cols);
    return FORGE_OK;
  });
}

}  // extern "C"
