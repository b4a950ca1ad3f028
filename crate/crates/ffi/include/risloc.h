/*
 * C interface to the risloc positioning library.
 *
 * Conventions:
 *   - Every fallible call returns a risloc_status; RISLOC_OK is zero. On
 *     any other status, risloc_last_error_message() returns an
 *     explanation for the current thread, valid until the next failing
 *     call on that thread.
 *   - Handles are created by risloc_experiment_desk/paper/load and must
 *     be released exactly once with risloc_experiment_free. A handle may
 *     move between threads but must not be used from two threads at the
 *     same time.
 *   - Strings returned as char* are owned by the caller and released
 *     with risloc_string_free.
 *   - Disabled estimation methods surface as NaN fields, matching the
 *     CSV column contract.
 *
 * This header is maintained by hand against the Rust implementation;
 * risloc_abi_version() reports the ABI generation it describes.
 */

#ifndef RISLOC_H
#define RISLOC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Version of the ABI described by this header. */
#define RISLOC_ABI_VERSION 1u

/* Result of a fallible call. */
typedef enum risloc_status {
    RISLOC_OK = 0,            /* success */
    RISLOC_CONFIG_ERROR = 1,  /* unknown key, malformed value, bad dimension */
    RISLOC_RUNTIME_ERROR = 2, /* numerical or model failure */
    RISLOC_IO_ERROR = 3,      /* filesystem failure */
    RISLOC_NULL_ARGUMENT = 4, /* a required pointer was null */
    RISLOC_INVALID_UTF8 = 5   /* a string argument was not valid UTF-8 */
} risloc_status;

/* Opaque experiment configuration handle. */
typedef struct risloc_experiment risloc_experiment;

/*
 * Flat summary of one Monte-Carlo trial. Position errors are meters; a
 * disabled method reports NaN in its error and rebuild fields. When
 * `failed` is nonzero the estimation errors are NaN and only the
 * identifying fields are meaningful.
 */
typedef struct risloc_trial_summary {
    double snr_db;              /* signal-to-noise ratio of the trial, dB */
    uint64_t trial_index;       /* trial index within its SNR cell */
    uint64_t seed;              /* derived per-trial RNG seed */
    double target_x;            /* true target x, meters */
    double target_y;            /* true target y, meters */
    double pos_err_coarse_m;    /* coarse-stage position error, meters */
    double pos_err_proposed_m;  /* refined-estimate position error, meters */
    double pos_err_cdgd_m;      /* baseline-estimate position error, meters */
    double peb_m;               /* position error bound at the truth, meters */
    double rebuilds_proposed;   /* exact atom rebuilds, refined estimate */
    double rebuilds_cdgd;       /* exact atom rebuilds, baseline */
    int32_t failed;             /* 1 when the trial failed */
} risloc_trial_summary;

/* ABI version of the loaded library; compare with RISLOC_ABI_VERSION. */
uint32_t risloc_abi_version(void);

/*
 * Message for the most recent failing call on this thread, or NULL when
 * no call has failed yet. Valid until the next failing call on the same
 * thread; do not free.
 */
const char *risloc_last_error_message(void);

/*
 * New experiment with the small-dimension defaults (8-element arrays,
 * 8 subcarriers, 8 snapshots). Returns NULL only on allocation failure.
 */
risloc_experiment *risloc_experiment_desk(void);

/*
 * New experiment with the full-scale defaults (32-element arrays,
 * 20 subcarriers, 32 snapshots, long sweeps).
 */
risloc_experiment *risloc_experiment_paper(void);

/*
 * Loads a `key = value` configuration file over the small-dimension
 * defaults and stores the new handle in *out.
 */
risloc_status risloc_experiment_load(const char *path,
                                     risloc_experiment **out);

/* Releases a handle. NULL is a no-op. */
void risloc_experiment_free(risloc_experiment *h);

/* Sets the master seed driving every per-trial RNG stream. */
risloc_status risloc_experiment_set_seed(risloc_experiment *h,
                                         uint64_t seed);

/* Sets the number of Monte-Carlo trials per SNR point. */
risloc_status risloc_experiment_set_trials(risloc_experiment *h,
                                           uint64_t trials);

/*
 * Sets one configuration key to a value, with the same keys, syntax, and
 * validation as the configuration file (e.g. key "snr_db_list", value
 * "-10,0,10").
 */
risloc_status risloc_experiment_set(risloc_experiment *h,
                                    const char *key,
                                    const char *value);

/*
 * Canonical `key = value` text of the handle's full configuration, in
 * the format risloc_experiment_load accepts. Returns NULL when h is
 * NULL. Release with risloc_string_free.
 */
char *risloc_experiment_config_text(const risloc_experiment *h);

/* Releases a string returned by this library. NULL is a no-op. */
void risloc_string_free(char *s);

/*
 * Runs one seeded trial at the given SNR and fills *out. The trial is
 * fully determined by the configuration plus (snr_db, trial_index);
 * rerunning reproduces the summary exactly.
 */
risloc_status risloc_run_trial(const risloc_experiment *h,
                               double snr_db,
                               uint64_t trial_index,
                               risloc_trial_summary *out);

/*
 * Runs the configured SNR x trials sweep and writes aggregate.csv,
 * trials.csv, and report.json into out_dir (created if missing).
 * Identical configurations and seeds produce byte-identical CSV files.
 */
risloc_status risloc_run_sweep(const risloc_experiment *h,
                               const char *out_dir);

/*
 * Evaluates the position error bound at target (x, y) under the handle's
 * scene, probing seed, and gain magnitudes, with noise calibrated to
 * snr_db. Writes the bound in meters to *out_peb_m; an uninformative
 * geometry yields +infinity.
 */
risloc_status risloc_position_bound(const risloc_experiment *h,
                                    double snr_db,
                                    double x,
                                    double y,
                                    double *out_peb_m);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* RISLOC_H */
