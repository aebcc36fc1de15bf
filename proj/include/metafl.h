/* C API for the metafl engine: opaque context, error codes, string results.
 * Every function returns 0 on success or a METAFL_ERR_* code; the last error
 * message is retained on the context. */
#ifndef METAFL_H
#define METAFL_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct metafl_ctx metafl_ctx;

enum {
  METAFL_OK = 0,
  METAFL_ERR_CONFIG = 1,
  METAFL_ERR_SHAPE = 2,
  METAFL_ERR_DATA = 3,
  METAFL_ERR_AGGREGATION = 4,
  METAFL_ERR_CAPABILITY = 5,
  METAFL_ERR_PROTOCOL = 6,
  METAFL_ERR_EPISODE = 7,
  METAFL_ERR_IO = 8,
  METAFL_ERR_UNKNOWN = 99,
  METAFL_ERR_BADHANDLE = 100
};

const char* metafl_version(void);

metafl_ctx* metafl_create(void);
void metafl_destroy(metafl_ctx* ctx);

/* Message of the most recent failed call on this context; never NULL. */
const char* metafl_last_error(const metafl_ctx* ctx);

int metafl_load_config(metafl_ctx* ctx, const char* path);
int metafl_override_seed(metafl_ctx* ctx, unsigned long long seed);
int metafl_set_workers(metafl_ctx* ctx, int workers);

/* stages: comma list drawn from pretrain,adapt,evaluate (pipeline order).
 * init_mode: "checkpoint" or "random". out_dir: artifact directory. */
int metafl_run_pipeline(metafl_ctx* ctx, const char* stages, const char* init_mode,
                        const char* out_dir);

/* defenses/attacks: comma lists; NULL selects the built-in defense set and
 * the config's attack domain. Writes the Table-style accuracy matrix. */
int metafl_run_matrix(metafl_ctx* ctx, const char* defenses, const char* attacks,
                      const char* out_csv);

/* Enumeration-backed oracle checks; *failures receives the failing count. */
int metafl_run_oracle_suite(metafl_ctx* ctx, unsigned long long seed, int n_instances,
                            const char* out_csv, int* failures);

int metafl_emit_plots(metafl_ctx* ctx, const char* metrics_csv, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* METAFL_H */
