/* C API for the graph log debugger core. All entry points are thread-safe
 * with respect to distinct handles; a single handle must not be shared
 * between threads without external synchronization.
 *
 * Every function returns a gldb_status. On failure, *error_msg (when
 * non-NULL) receives a malloc'd diagnostic that the caller must release
 * with gldb_free(). Result strings are JSON documents, also gldb_free()'d
 * by the caller.
 */
#ifndef GLDB_GRAPHLOGDEBUG_H
#define GLDB_GRAPHLOGDEBUG_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int32_t gldb_status;

#define GLDB_OK 0
#define GLDB_ERR_USAGE 2
#define GLDB_ERR_DATA 3
#define GLDB_ERR_INTERNAL 4

const char* gldb_version(void);

void gldb_free(char* ptr);

/* One-shot operations. Options are JSON objects; see the CLI for the
 * accepted keys (they mirror the command-line flags). */
gldb_status gldb_train(const char* options_json, char** result_json, char** error_msg);
gldb_status gldb_inject(const char* options_json, char** result_json, char** error_msg);
gldb_status gldb_generate(const char* options_json, char** result_json, char** error_msg);
gldb_status gldb_evaluate(const char* options_json, char** result_json, char** error_msg);
gldb_status gldb_grad_check(const char* options_json, char** result_json, char** error_msg);

/* Detector handle: a loaded checkpoint (parameters + graph snapshot). */
typedef struct gldb_detector gldb_detector;

gldb_status gldb_detector_open(const char* checkpoint_path, gldb_detector** out,
                               char** error_msg);

/* Runs online detection over a log file. Options: {"input": path,
 * "schema": path, "out": verdicts path, "snapshot_out": optional path,
 * "tau": optional number, "train_frac": optional number (skip that prefix)}. */
gldb_status gldb_detector_run(gldb_detector* det, const char* options_json, char** result_json,
                              char** error_msg);

void gldb_detector_close(gldb_detector* det);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GLDB_GRAPHLOGDEBUG_H */
