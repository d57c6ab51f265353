#ifndef RELBOOST_H
#define RELBOOST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RbStatus {
  RB_STATUS_OK = 0,
  RB_STATUS_NULL_ARGUMENT = 1,
  RB_STATUS_INVALID_UTF8 = 2,
  RB_STATUS_IO = 3,
  RB_STATUS_PARSE = 4,
  RB_STATUS_SCHEMA_MISMATCH = 5,
  RB_STATUS_INVALID_MODEL = 6,
  RB_STATUS_INVALID_DATA = 7,
  RB_STATUS_INTERNAL = 8,
} RbStatus;

// Facts parsed against a model's schema.
typedef struct RbFactStore RbFactStore;

// A trained model.
typedef struct RbModel RbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Owned by the library.
const char *rb_last_error_message(void);

// Library version, static.
const char *rb_version(void);

// Loads a model document from `path`.
//
// # Safety
// `path` must be a valid C string; `out` must point to writable storage.
enum RbStatus rb_model_load(const char *path, struct RbModel **out);

// Parses a model document held in memory.
//
// # Safety
// `json` must be a valid C string; `out` must point to writable storage.
enum RbStatus rb_model_from_json(const char *json, struct RbModel **out);

// # Safety
// `model` must come from this library and not be used afterwards. Null is ignored.
void rb_model_free(struct RbModel *model);

// Number of trees in the model, 0 for null.
//
// # Safety
// `model` must be null or a live handle.
size_t rb_model_tree_count(const struct RbModel *model);

// Target action name, to be released with `rb_string_free`.
//
// # Safety
// `model` must be a live handle; `out` must point to writable storage.
enum RbStatus rb_model_target(const struct RbModel *model, char **out);

// Weighted rules of every tree (`tree < 0`) or of one tree.
//
// # Safety
// `model` must be a live handle; `out` must point to writable storage.
enum RbStatus rb_model_rules(const struct RbModel *model, int64_t tree, bool unicode, char **out);

// Loads a facts file using the model's schema.
//
// # Safety
// `model` must be a live handle, `path` a valid C string, `out` writable.
enum RbStatus rb_facts_load(const struct RbModel *model,
                            const char *path,
                            struct RbFactStore **out);

// Parses facts text using the model's schema.
//
// # Safety
// `model` must be a live handle, `text` a valid C string, `out` writable.
enum RbStatus rb_facts_parse(const struct RbModel *model,
                             const char *text,
                             struct RbFactStore **out);

// # Safety
// `facts` must come from this library and not be used afterwards. Null is ignored.
void rb_facts_free(struct RbFactStore *facts);

// Probability of the model's action for `subject` at hour `time`.
//
// # Safety
// Handles must be live, `subject` a valid C string, `out` writable.
enum RbStatus rb_predict(const struct RbModel *model,
                         const struct RbFactStore *facts,
                         const char *subject,
                         uint32_t time,
                         double *out);

// # Safety
// `s` must come from this library and not be used afterwards. Null is ignored.
void rb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELBOOST_H */
