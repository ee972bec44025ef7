#ifndef MPLREG_MPLREG_H
#define MPLREG_MPLREG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MPLREG_API __declspec(dllexport)
#else
#define MPLREG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mplreg_status {
    MPLREG_OK = 0,
    MPLREG_ERR_INVALID_ARGUMENT = 1,
    MPLREG_ERR_IO = 2,
    MPLREG_ERR_FORMAT = 3,
    MPLREG_ERR_UNSUPPORTED = 4,
    MPLREG_ERR_GRID_MISMATCH = 5,
    MPLREG_ERR_DOMAIN = 6,
    MPLREG_ERR_CONFIG = 7,
    MPLREG_ERR_EMPTY_ROI = 8,
    MPLREG_ERR_NON_DIFFERENTIABLE = 9,
    MPLREG_ERR_DIVERGENCE = 10,
    MPLREG_ERR_GENERATION = 11,
    MPLREG_ERR_INTERNAL = 100
} mplreg_status;

/* Opaque handles. Every handle returned through an out pointer is owned by
   the caller and released with the matching _free function. Pointers
   returned by accessors are borrowed and live as long as their owner. */
typedef struct mplreg_volume mplreg_volume;
typedef struct mplreg_field mplreg_field;
typedef struct mplreg_config mplreg_config;
typedef struct mplreg_result mplreg_result;
typedef struct mplreg_phantom mplreg_phantom;

MPLREG_API const char* mplreg_version(void);
MPLREG_API const char* mplreg_status_name(mplreg_status status);

/* Message of the last failing call on this thread, "" if none. */
MPLREG_API const char* mplreg_last_error(void);

/* Caps data-parallel workers for this process; 0 restores the default
   (hardware concurrency, capped by MPLREG_THREADS). */
MPLREG_API void mplreg_set_threads(int n);
MPLREG_API int mplreg_get_threads(void);

/* Strings handed out by the library. */
MPLREG_API void mplreg_string_free(char* s);

/* ---- volumes ---------------------------------------------------------- */

MPLREG_API mplreg_status mplreg_volume_read(const char* path, int is_label, mplreg_volume** out);
/* data holds dims[0]*dims[1]*dims[2] values, x fastest. spacing/origin may be NULL. */
MPLREG_API mplreg_status mplreg_volume_create(const int dims[3], const double spacing[3], const double origin[3],
                                              const double* data, int is_label, mplreg_volume** out);
MPLREG_API mplreg_status mplreg_volume_write(const mplreg_volume* v, const char* path);
MPLREG_API void mplreg_volume_dims(const mplreg_volume* v, int dims[3]);
MPLREG_API void mplreg_volume_spacing(const mplreg_volume* v, double spacing[3]);
MPLREG_API int mplreg_volume_is_label(const mplreg_volume* v);
MPLREG_API const double* mplreg_volume_data(const mplreg_volume* v);
MPLREG_API void mplreg_volume_free(mplreg_volume* v);

/* ---- displacement fields (voxel units) -------------------------------- */

MPLREG_API mplreg_status mplreg_field_read(const char* path, mplreg_field** out);
/* flat: all x components, then all y, then all z. NULL gives a zero field. */
MPLREG_API mplreg_status mplreg_field_create(const int dims[3], const double spacing[3], const double* flat,
                                             mplreg_field** out);
MPLREG_API mplreg_status mplreg_field_write(const mplreg_field* f, const char* path);
MPLREG_API void mplreg_field_dims(const mplreg_field* f, int dims[3]);
MPLREG_API const double* mplreg_field_component(const mplreg_field* f, int axis);
MPLREG_API mplreg_status mplreg_field_warp(const mplreg_field* f, const mplreg_volume* v, mplreg_volume** out);
MPLREG_API void mplreg_field_free(mplreg_field* f);

/* ---- configuration ---------------------------------------------------- */

MPLREG_API mplreg_status mplreg_config_default(mplreg_config** out);
MPLREG_API mplreg_status mplreg_config_parse(const char* json_text, mplreg_config** out);
MPLREG_API mplreg_status mplreg_config_load(const char* path, mplreg_config** out);
MPLREG_API mplreg_status mplreg_config_to_json(const mplreg_config* c, char** out);
MPLREG_API mplreg_status mplreg_config_set_cascades(mplreg_config* c, int cascades);
MPLREG_API mplreg_status mplreg_config_set_preprocess(mplreg_config* c, int enabled);
MPLREG_API mplreg_status mplreg_config_set_seed(mplreg_config* c, uint64_t seed);
MPLREG_API uint64_t mplreg_config_seed(const mplreg_config* c);
MPLREG_API void mplreg_config_free(mplreg_config* c);

/* ---- registration ----------------------------------------------------- */

typedef struct mplreg_progress {
    int stage;          /* 0 affine, n for cascade n */
    int iteration;
    double mi;
    double gpl;
    double reg;
    double total;
    double pct_neg_jacobian;
} mplreg_progress;

typedef void (*mplreg_progress_fn)(const mplreg_progress* p, void* user);

/* Preprocesses (unless disabled in the config) and registers. On
   MPLREG_ERR_DIVERGENCE *out still receives a partial result built from the
   last finished stage. */
MPLREG_API mplreg_status mplreg_register(const mplreg_volume* fixed, const mplreg_volume* fixed_label,
                                         const mplreg_volume* moving, const mplreg_volume* moving_label,
                                         const mplreg_config* config, mplreg_progress_fn progress, void* user,
                                         mplreg_result** out);

MPLREG_API int mplreg_result_is_partial(const mplreg_result* r);
MPLREG_API const mplreg_volume* mplreg_result_fixed(const mplreg_result* r);
MPLREG_API const mplreg_volume* mplreg_result_fixed_label(const mplreg_result* r);
MPLREG_API const mplreg_volume* mplreg_result_moving(const mplreg_result* r);
MPLREG_API const mplreg_volume* mplreg_result_warped(const mplreg_result* r);
MPLREG_API const mplreg_volume* mplreg_result_warped_label(const mplreg_result* r);
MPLREG_API const mplreg_field* mplreg_result_field(const mplreg_result* r);
MPLREG_API int mplreg_result_stage_count(const mplreg_result* r);
MPLREG_API double mplreg_result_stage_dice(const mplreg_result* r, int stage);
/* CSV with header stage,iter,mi,gpl,reg,total,pct_neg_jacobian. */
MPLREG_API mplreg_status mplreg_result_trace_csv(const mplreg_result* r, char** out);
/* Carries a volume co-aligned with the raw moving image into fixed space. */
MPLREG_API mplreg_status mplreg_result_apply(const mplreg_result* r, const mplreg_volume* companion,
                                             mplreg_volume** out);
MPLREG_API void mplreg_result_free(mplreg_result* r);

/* ---- metrics ---------------------------------------------------------- */

typedef struct mplreg_metrics {
    double dice;
    double pct_neg_jacobian;
    double field_rms;
    double runtime_seconds;
} mplreg_metrics;

/* field may be NULL. */
MPLREG_API mplreg_status mplreg_metrics_compute(const mplreg_volume* warped_label, const mplreg_volume* fixed_label,
                                                const mplreg_field* field, mplreg_metrics* out);
MPLREG_API void mplreg_result_metrics(const mplreg_result* r, mplreg_metrics* out);
MPLREG_API mplreg_status mplreg_metrics_json(const mplreg_metrics* m, int include_runtime, char** out);
MPLREG_API mplreg_status mplreg_metrics_markdown(const char* method, const mplreg_metrics* m, int with_header,
                                                 char** out);

/* ---- phantoms --------------------------------------------------------- */

typedef enum mplreg_phantom_part {
    MPLREG_PHANTOM_FIXED = 0,
    MPLREG_PHANTOM_MOVING = 1,
    MPLREG_PHANTOM_FIXED_LABEL = 2,
    MPLREG_PHANTOM_MOVING_LABEL = 3,
    MPLREG_PHANTOM_COMPANION = 4,
    MPLREG_PHANTOM_COMPANION_FIXED = 5
} mplreg_phantom_part;

/* params_json overrides generator parameters; NULL keeps the defaults. */
MPLREG_API mplreg_status mplreg_phantom_generate(uint64_t seed, const char* params_json, mplreg_phantom** out);
MPLREG_API mplreg_status mplreg_phantom_read(const char* dir, mplreg_phantom** out);
MPLREG_API mplreg_status mplreg_phantom_write(const mplreg_phantom* p, const char* dir);
MPLREG_API const mplreg_volume* mplreg_phantom_volume(const mplreg_phantom* p, mplreg_phantom_part part);
MPLREG_API const mplreg_field* mplreg_phantom_true_field(const mplreg_phantom* p);
MPLREG_API uint64_t mplreg_phantom_seed(const mplreg_phantom* p);
MPLREG_API void mplreg_phantom_free(mplreg_phantom* p);

/* ---- gradient checks -------------------------------------------------- */

typedef void (*mplreg_gradcheck_fn)(const char* name, size_t parameters, double max_rel_error, void* user);

MPLREG_API double mplreg_gradient_tolerance(void);
/* Runs the checker self-test, then every check on random n^3 instances
   (4 <= n <= 8), and reports each through fn. *worst receives the largest
   relative error. */
MPLREG_API mplreg_status mplreg_check_gradients(uint64_t seed, int n, mplreg_gradcheck_fn fn, void* user,
                                                double* worst);

/* ---- overlays --------------------------------------------------------- */

typedef struct mplreg_overlay_options {
    int axis;           /* 0, 1 or 2 */
    int index;          /* negative: middle slice */
    int use_window;     /* window/level below apply when nonzero */
    double window;
    double level;
    double edge_quantile;
} mplreg_overlay_options;

MPLREG_API mplreg_overlay_options mplreg_overlay_defaults(void);
/* 8-bit grayscale PNG of the fixed slice with the moving slice's edges. */
MPLREG_API mplreg_status mplreg_overlay_png(const mplreg_volume* fixed, const mplreg_volume* moving,
                                            const mplreg_overlay_options* options, const char* path, int* width,
                                            int* height);

/* ---- phantom suite ---------------------------------------------------- */

typedef struct mplreg_suite_case {
    uint64_t seed;
    double baseline_dice;
    double dice;
    double pct_neg_jacobian;
    double runtime_seconds;
} mplreg_suite_case;

typedef void (*mplreg_suite_fn)(const mplreg_suite_case* c, void* user);

/* Registers count phantom cases (seeds first_seed...) with up to jobs
   running at once. The report is JSON with per-case rows and means;
   markdown (may be NULL) receives a table. */
MPLREG_API mplreg_status mplreg_suite_run(uint64_t first_seed, int count, const char* phantom_params_json,
                                          const mplreg_config* config, int jobs, mplreg_suite_fn fn, void* user,
                                          char** report_json, char** markdown);

#ifdef __cplusplus
}
#endif

#endif
