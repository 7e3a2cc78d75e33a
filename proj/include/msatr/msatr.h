#ifndef MSATR_MSATR_H
#define MSATR_MSATR_H

/* C interface to the msatr enhancement library. Every handle is opaque and
 * released with its matching *_free function (NULL is accepted). Functions
 * return a status code; on failure msatr_last_error() describes the problem
 * for the calling thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MSATR_API __declspec(dllexport)
#else
#define MSATR_API __attribute__((visibility("default")))
#endif

typedef enum msatr_status {
  MSATR_OK = 0,
  MSATR_ERR_INVALID_ARGUMENT = 1,
  MSATR_ERR_DIMENSION = 2,
  MSATR_ERR_DOMAIN = 3,
  MSATR_ERR_CONTRACT = 4,
  MSATR_ERR_CONFIG = 5,
  MSATR_ERR_PARTITION = 6,
  MSATR_ERR_CHECKPOINT = 7,
  MSATR_ERR_DATASET = 8,
  MSATR_ERR_DIVERGENCE = 9,
  MSATR_ERR_IO = 10,
  MSATR_ERR_INTERNAL = 11
} msatr_status;

typedef struct msatr_config msatr_config;
typedef struct msatr_trainer msatr_trainer;
typedef struct msatr_model msatr_model;
typedef struct msatr_image msatr_image;
typedef struct msatr_report msatr_report;

/* Receives warnings (skipped files and the like). */
typedef void (*msatr_message_fn)(const char* message, void* user);

MSATR_API const char* msatr_version(void);
MSATR_API const char* msatr_status_name(msatr_status status);
/* Message of the last failed call on this thread; "" if none. */
MSATR_API const char* msatr_last_error(void);

/* ---- run configuration ---- */

MSATR_API msatr_status msatr_config_default(msatr_config** out);
/* Relative dataset paths in the file resolve against its directory. */
MSATR_API msatr_status msatr_config_load(const char* path, msatr_config** out);
/* "key=value", same keys as the file. */
MSATR_API msatr_status msatr_config_set(msatr_config* cfg, const char* assignment);
/* Canonical text form; owned by cfg, valid until the next call on it. */
MSATR_API const char* msatr_config_text(msatr_config* cfg);
MSATR_API size_t msatr_config_total_steps(const msatr_config* cfg);
MSATR_API size_t msatr_config_checkpoint_every(const msatr_config* cfg);
MSATR_API void msatr_config_free(msatr_config* cfg);

/* ---- training ---- */

typedef struct msatr_step_record {
  size_t step;
  double lr;
  double d_loss;
  double adv_global;
  double adv_local;
  double sfp;
  double identity;
  double luminance;
  /* Bit i set when term i (in the order above, adv_global = bit 0) is present. */
  unsigned present;
  double total;
} msatr_step_record;

MSATR_API msatr_status msatr_trainer_create(const msatr_config* cfg, msatr_message_fn warn, void* user,
                                            msatr_trainer** out);
/* Continues a run from a checkpoint holding training state; the dataset is
 * reloaded from the directories recorded in it. */
MSATR_API msatr_status msatr_trainer_resume(const char* checkpoint_path, msatr_message_fn warn, void* user,
                                            msatr_trainer** out);
MSATR_API msatr_status msatr_trainer_step(msatr_trainer* t, msatr_step_record* record);
MSATR_API size_t msatr_trainer_current_step(const msatr_trainer* t);
MSATR_API size_t msatr_trainer_total_steps(const msatr_trainer* t);
MSATR_API msatr_status msatr_trainer_save(const msatr_trainer* t, const char* path);
MSATR_API void msatr_trainer_free(msatr_trainer* t);

/* Tab-separated training log. The row string is thread-local and valid until
 * the next call. */
MSATR_API const char* msatr_log_header(void);
MSATR_API const char* msatr_log_row(const msatr_step_record* record);

/* ---- models ---- */

MSATR_API msatr_status msatr_model_load(const char* checkpoint_path, msatr_model** out);
/* Parameter-free pass-through model at the given resolution. */
MSATR_API msatr_status msatr_model_identity(size_t width, size_t height, msatr_model** out);
/* Writes weights only (no training state). */
MSATR_API msatr_status msatr_model_save(const msatr_model* m, const char* path);
MSATR_API msatr_status msatr_model_info(const msatr_model* m, size_t* width, size_t* height, size_t* parameters);
/* Mirror-pads to multiples of 8, enhances, and crops back. */
MSATR_API msatr_status msatr_model_enhance(const msatr_model* m, const msatr_image* in, msatr_image** out);
MSATR_API void msatr_model_free(msatr_model* m);

/* ---- images (8-bit RGB, binary PPM files) ---- */

MSATR_API msatr_status msatr_image_read(const char* path, msatr_image** out);
MSATR_API msatr_status msatr_image_write(const msatr_image* img, const char* path);
/* Copies width*height*3 bytes of row-major RGB. */
MSATR_API msatr_status msatr_image_create(size_t width, size_t height, const uint8_t* rgb, msatr_image** out);
MSATR_API size_t msatr_image_width(const msatr_image* img);
MSATR_API size_t msatr_image_height(const msatr_image* img);
MSATR_API const uint8_t* msatr_image_pixels(const msatr_image* img);
MSATR_API void msatr_image_free(msatr_image* img);

/* ---- region mixing preview ---- */

typedef struct msatr_mix_info {
  size_t top;
  size_t left;
  size_t height;
  size_t width;
  double alpha;
} msatr_mix_info;

MSATR_API msatr_status msatr_mix(const msatr_image* low, const msatr_image* enhanced, uint64_t seed, msatr_image** out,
                                 msatr_mix_info* info);

/* ---- evaluation ---- */

/* Pairs files by name; `passes` repeated enhancements are recorded per row. */
MSATR_API msatr_status msatr_evaluate(const msatr_model* m, const char* low_dir, const char* ref_dir, size_t passes,
                                      msatr_message_fn warn, void* user, msatr_report** out);
MSATR_API size_t msatr_report_rows(const msatr_report* r);
MSATR_API size_t msatr_report_skipped(const msatr_report* r);
MSATR_API msatr_status msatr_report_row(const msatr_report* r, size_t i, double* psnr, double* ssim);
MSATR_API double msatr_report_mean_psnr(const msatr_report* r);
MSATR_API double msatr_report_mean_ssim(const msatr_report* r);
/* Owned by the report. */
MSATR_API const char* msatr_report_tsv(const msatr_report* r);
MSATR_API const char* msatr_report_summary(const msatr_report* r);
MSATR_API void msatr_report_free(msatr_report* r);

/* ---- verification and data ---- */

typedef void (*msatr_check_fn)(const char* name, int passed, const char* detail, double seconds, void* user);

/* Runs the built-in checks (plus a deliberately broken one when
 * inject_fault is nonzero) and stores the number of failures. */
MSATR_API msatr_status msatr_selfcheck(int inject_fault, msatr_check_fn progress, void* user, size_t* failures);

/* Writes root/low, root/normal, root/eval/low, root/eval/ref. */
MSATR_API msatr_status msatr_write_synthetic(const char* root, size_t size, uint64_t seed, size_t train_low,
                                             size_t train_normal, size_t eval_pairs);

#ifdef __cplusplus
}
#endif

#endif
