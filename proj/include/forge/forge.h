#ifndef FORGE_FORGE_H
#define FORGE_FORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FORGE_API __declspec(dllexport)
#else
#define FORGE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum forge_status {
  FORGE_OK = 0,
  FORGE_ERR_ARGUMENT = 1,
  FORGE_ERR_IO = 2,
  FORGE_ERR_PARSE = 3,
  FORGE_ERR_VALIDATION = 4, /* a check ran and failed; the JSON result is still set */
  FORGE_ERR_COMPILE = 5,
  FORGE_ERR_CLIENT = 6,
  FORGE_ERR_NO_REFERENCE = 7,
  FORGE_ERR_INTERNAL = 8
} forge_status;

typedef struct forge_context forge_context;
typedef struct forge_corpus forge_corpus;

FORGE_API const char* forge_version(void);
FORGE_API const char* forge_status_name(forge_status s);

FORGE_API forge_status forge_context_new(forge_context** out);
FORGE_API void forge_context_free(forge_context* ctx);
/* Message of the last failed call on this context; empty after a success.
   Valid until the next call on the context. */
FORGE_API const char* forge_last_error(const forge_context* ctx);

/* Every char* handed out by the library is released with this. */
FORGE_API void forge_string_free(char* s);

/* Runs a command with a JSON request object and returns a JSON document.
   Command names match the CLI: validate, build-thinker, build-talker, clean,
   stats, generate, templates-expand, plan-show, plan-directive, plan-budget,
   loss-check, eval-cer, eval-wer, eval-only-yes. */
FORGE_API forge_status forge_run(forge_context* ctx, const char* command, const char* request_json,
                                 char** result_json);

/* Corpus handles. */
FORGE_API forge_status forge_corpus_load(forge_context* ctx, const char* path, forge_corpus** out);
FORGE_API forge_status forge_corpus_parse(forge_context* ctx, const char* jsonl, size_t len, forge_corpus** out);
FORGE_API void forge_corpus_free(forge_corpus* c);
FORGE_API size_t forge_corpus_size(const forge_corpus* c);
FORGE_API size_t forge_corpus_reject_count(const forge_corpus* c);
/* {"valid":bool,"rejects":[...],"violations":[...]}; FORGE_ERR_VALIDATION when invalid. */
FORGE_API forge_status forge_corpus_validate(forge_context* ctx, const forge_corpus* c, char** report_json);
FORGE_API forge_status forge_corpus_serialize(forge_context* ctx, const forge_corpus* c, char** jsonl);
/* One thinker training sequence (JSON) for dialogue `index`. */
FORGE_API forge_status forge_corpus_compile_thinker(forge_context* ctx, const forge_corpus* c, size_t index,
                                                    uint64_t seed, double p_user, double p_assistant,
                                                    char** sequence_json);

/* Corpus arithmetic. */
FORGE_API forge_status forge_downsample_frames(forge_context* ctx, int64_t n_frames, int64_t* out);
FORGE_API forge_status forge_tokens_for_hours(forge_context* ctx, double hours, double rate_hz, int64_t* out);

/* Captions, as JSON records in the corpus `caption` shape. */
FORGE_API forge_status forge_caption_validate(forge_context* ctx, const char* caption_json, char** report_json);
FORGE_API forge_status forge_caption_render(forge_context* ctx, const char* caption_json, uint64_t seed,
                                            char** text);
FORGE_API forge_status forge_caption_extract(forge_context* ctx, const char* text, char** caption_json);

/* Metrics. */
FORGE_API forge_status forge_cer(forge_context* ctx, const char* ref, const char* hyp, double* rate);
FORGE_API forge_status forge_wer(forge_context* ctx, const char* ref, const char* hyp, double* rate);
FORGE_API forge_status forge_only_yes_accuracy(forge_context* ctx, const char* const* responses, size_t n,
                                               double* accuracy);
FORGE_API forge_status forge_cosine(forge_context* ctx, const double* a, const double* b, size_t n,
                                    double* out);

/* Losses over row-major rows x cols matrices. grad may be NULL; otherwise it
   receives rows*cols doubles. mask entries are 0 or 1. */
FORGE_API forge_status forge_masked_ce(forge_context* ctx, const double* logits, size_t rows, size_t cols,
                                       const int64_t* targets, const uint8_t* mask, double* loss, double* grad);
FORGE_API forge_status forge_kl_distill(forge_context* ctx, const double* teacher, const double* student,
                                        size_t rows, size_t cols, const uint8_t* mask, double temperature,
                                        int reverse, double* loss, double* grad);

#ifdef __cplusplus
}
#endif

#endif
