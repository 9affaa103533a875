#ifndef MAVL_H
#define MAVL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for fallible entry points.
 */
typedef enum {
  MavlStatus_Ok = 0,
  /**
   * A pointer was null or a string was not valid UTF-8.
   */
  MavlStatus_InvalidArgument = 1,
  /**
   * JSON or corpus input could not be parsed.
   */
  MavlStatus_ParseError = 2,
  MavlStatus_IoError = 3,
  /**
   * No votes remained after abstentions.
   */
  MavlStatus_NoAnswer = 4,
  MavlStatus_InternalError = 5,
} MavlStatus;

/**
 * Agent roles exposed across the ABI.
 */
typedef enum {
  MavlRole_Junior = 0,
  MavlRole_Senior = 1,
  MavlRole_Manager = 2,
} MavlRole;

/**
 * Opaque knowledge-base index handle.
 */
typedef struct MavlKbIndex MavlKbIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *mavl_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by one of the
 * string-returning functions here, not yet freed, or null.
 */
void mavl_string_free(char *s);

/**
 * Canonicalize an answer string (lowercase, strip punctuation and leading
 * articles, collapse whitespace). Returns a new string; free with
 * [`mavl_string_free`].
 *
 * # Safety
 * `raw` must be a valid nul-terminated UTF-8 string or null.
 */
char *mavl_normalize_answer(const char *raw);

/**
 * Soft accuracy of `predicted` against `gold_json`, a JSON array of
 * exactly 10 annotation strings. Writes the score into `out_score`.
 *
 * # Safety
 * `predicted` and `gold_json` must be valid nul-terminated UTF-8 strings;
 * `out_score` must point to writable memory for one f64.
 */
MavlStatus mavl_vqa_soft_accuracy(const char *predicted, const char *gold_json, double *out_score);

/**
 * Parse raw planner output for a role: extract action tokens, clamp to
 * the role's scope, fall back to the full allowed set when empty. Returns
 * JSON `{"actions": [...], "fallback": bool}`.
 *
 * # Safety
 * `raw` must be a valid nul-terminated UTF-8 string or null.
 */
char *mavl_parse_plan(const char *raw, MavlRole role);

/**
 * Render the role-scoped planner prompt for a task string.
 *
 * # Safety
 * `task` must be a valid nul-terminated UTF-8 string or null.
 */
char *mavl_build_planner_prompt(MavlRole role, const char *task);

/**
 * Render a full prompt document from JSON
 * `{"head": "...", "examples": [...], "test": {...}}` where each record
 * has `caption`, `question` and optional `answer`, `candidates`,
 * `kbs_knowledge`, `llm_knowledge` fields.
 *
 * # Safety
 * `doc_json` must be a valid nul-terminated UTF-8 string or null.
 */
char *mavl_render_prompt(const char *doc_json);

/**
 * Tally weighted votes from JSON
 * `[{"role": "junior", "answer": "...", "weight": 2}, ...]`. Answers are
 * normalized before pooling. Returns JSON
 * `{"winner": "...", "tie_broken": bool, "totals": {...}}`.
 *
 * # Safety
 * `votes_json` must be a valid nul-terminated UTF-8 string or null.
 */
char *mavl_tally_votes(const char *votes_json);

/**
 * Build a knowledge-base index from a line-delimited corpus file. Returns
 * an owned handle, or null with a pending error. Free with
 * [`mavl_kb_index_free`].
 *
 * # Safety
 * `corpus_path` must be a valid nul-terminated UTF-8 string or null.
 */
MavlKbIndex *mavl_kb_index_build(const char *corpus_path, bool lenient);

/**
 * Load an index sidecar previously written by [`mavl_kb_index_save`].
 *
 * # Safety
 * `path` must be a valid nul-terminated UTF-8 string or null.
 */
MavlKbIndex *mavl_kb_index_load(const char *path);

/**
 * Persist the index to a binary sidecar.
 *
 * # Safety
 * `index` must be a live handle from this library; `path` a valid
 * nul-terminated UTF-8 string.
 */
MavlStatus mavl_kb_index_save(const MavlKbIndex *index, const char *path);

/**
 * Number of documents in the index; 0 for a null handle.
 *
 * # Safety
 * `index` must be a live handle from this library or null.
 */
uint64_t mavl_kb_index_len(const MavlKbIndex *index);

/**
 * Retrieve the top-k snippets for a caption+question query. Returns a
 * JSON array of `{doc_id, title, text, score}` objects.
 *
 * # Safety
 * `index` must be a live handle; `caption` and `question` valid
 * nul-terminated UTF-8 strings.
 */
char *mavl_kb_retrieve(const MavlKbIndex *index,
                       const char *caption,
                       const char *question,
                       uint64_t k);

/**
 * Release an index handle.
 *
 * # Safety
 * `index` must be a handle from this library, not yet freed, or null.
 */
void mavl_kb_index_free(MavlKbIndex *index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAVL_H */
