/* C API for the specguard library: spectral-norm penalized attention
 * training, Lipschitz bound reports, adversarial evaluation and the
 * verification suites. All functions return SG_OK (0) on success or a
 * negative error code; sg_last_error() describes the most recent failure on
 * the calling thread. Strings returned through char** are heap-allocated and
 * must be released with sg_string_free(). */

#ifndef SPECGUARD_H
#define SPECGUARD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define SG_OK 0
#define SG_VERIFY_FAILED 1 /* suites ran, at least one failed */
#define SG_ERR_ARGUMENT (-1)
#define SG_ERR_SHAPE (-2)
#define SG_ERR_CONTRACT (-3)
#define SG_ERR_IO (-4)
#define SG_ERR_INTERNAL (-5)

typedef struct sg_config sg_config; /* opaque run configuration */

const char* sg_version(void);
const char* sg_last_error(void);
void sg_string_free(char* s);

/* Configuration: flat `section.key value` text, flags win over files. */
sg_config* sg_config_create(void);
void sg_config_destroy(sg_config* cfg);
int sg_config_load_file(sg_config* cfg, const char* path);
int sg_config_set(sg_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated); returns SG_ERR_ARGUMENT when
 * the key is unknown or buf is too small. */
int sg_config_get(const sg_config* cfg, const char* key, char* buf, size_t cap);
/* Fully resolved canonical config text. */
int sg_config_resolved(const sg_config* cfg, char** text);

/* Commands. Each writes its artifacts under out_dir/out_path and reports the
 * produced table through *table when the pointer is non-NULL. */
int sg_train(const sg_config* cfg, const char* out_dir);
int sg_analyze_spectra(const char* checkpoint_path, double b_anchor, double delta0,
                       const sg_config* anchor_cfg_or_null, int samples, const char* out_dir);
int sg_attack_eval(const char* checkpoint_path, const sg_config* cfg, const char* out_path_or_null,
                   char** table);
/* suites_csv: comma-separated suite names or "all"; fault_op_or_null
 * deliberately corrupts one backward rule so the suites must fail (test
 * fixture). Returns SG_OK / SG_VERIFY_FAILED / negative error. */
int sg_verify(const char* suites_csv, const char* fault_op_or_null, char** report);
int sg_bench(const sg_config* cfg, int steps, char** table);

/* Small numeric entry points. Matrices are row-major double arrays. */
int sg_spectral_norm(const double* data, int rows, int cols, double* out);
int sg_power_iteration(const double* data, int rows, int cols, int iters, uint64_t seed,
                       double* sigma_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SPECGUARD_H */
