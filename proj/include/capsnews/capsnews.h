#ifndef CAPSNEWS_CAPSNEWS_H
#define CAPSNEWS_CAPSNEWS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CAPSNEWS_BUILDING)
#    define CN_API __declspec(dllexport)
#  else
#    define CN_API __declspec(dllimport)
#  endif
#else
#  define CN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every function returns a status code; 0 is success. On failure the
 * message is available from cn_last_error() on the same thread until the
 * next failing call. */
enum {
  CN_OK = 0,
  CN_ERR_INVALID_ARGUMENT = 1,
  CN_ERR_DIMENSION = 2,
  CN_ERR_SEQUENCE_TOO_SHORT = 3,
  CN_ERR_RANK = 4,
  CN_ERR_UNINITIALIZED_GRADIENT = 5,
  CN_ERR_PARSE = 6,
  CN_ERR_LABEL = 7,
  CN_ERR_EMPTY_INPUT = 8,
  CN_ERR_OUT_OF_VOCABULARY = 9,
  CN_ERR_ALIGNMENT = 10,
  CN_ERR_CONFIG = 11,
  CN_ERR_DIVERGENCE = 12,
  CN_ERR_INCOMPATIBLE = 13,
  CN_ERR_IO = 14,
  CN_ERR_NOT_FOUND = 15,
  CN_ERR_BUFFER_TOO_SMALL = 16,
  CN_ERR_INTERNAL = 17
};

enum { CN_SPLIT_TRAIN = 0, CN_SPLIT_VALIDATION = 1, CN_SPLIT_TEST = 2 };

typedef struct cn_config cn_config;
typedef struct cn_dataset cn_dataset;
typedef struct cn_model cn_model;
typedef struct cn_report cn_report;
typedef struct cn_analysis cn_analysis;

/* Receives each training log line (without newline). */
typedef void (*cn_log_fn)(const char* line, void* user);

CN_API const char* cn_version(void);
CN_API const char* cn_last_error(void);
CN_API const char* cn_status_string(int status);

/* Flat `key = value` settings. A fresh config holds the long-document
 * preset; setting `architecture` switches presets. */
CN_API int cn_config_create(cn_config** out);
CN_API int cn_config_load(const char* path, cn_config** out);
CN_API int cn_config_set(cn_config* config, const char* key, const char* value);
/* Copies the resolved value (NUL-terminated) into buf. `needed` receives the
 * size including the terminator; CN_ERR_BUFFER_TOO_SMALL if cap is short. */
CN_API int cn_config_get(const cn_config* config, const char* key, char* buf, size_t cap, size_t* needed);
CN_API int cn_config_save(const cn_config* config, const char* path);
CN_API void cn_config_destroy(cn_config* config);

/* ISOT split options (seed, isot_test_per_class, validation_fraction) come
 * from the config, which may be NULL for defaults. */
CN_API int cn_dataset_load_isot(const char* real_csv, const char* fake_csv, const cn_config* config,
                                cn_dataset** out);
CN_API int cn_dataset_load_liar(const char* train_tsv, const char* valid_tsv, const char* test_tsv,
                                cn_dataset** out);
CN_API int cn_dataset_size(const cn_dataset* dataset, int split, size_t* out);
CN_API int cn_dataset_num_classes(const cn_dataset* dataset, size_t* out);
CN_API int cn_dataset_rejected(const cn_dataset* dataset, size_t* out);
CN_API void cn_dataset_destroy(cn_dataset* dataset);

/* Builds the vocabulary and embeddings, trains with early stopping and
 * writes best.ckpt, train.log, vocab.txt, labels.txt, model.cfg and the
 * validation report into run_dir. embeddings_path, log, out_model and
 * out_validation_report may be NULL. */
CN_API int cn_train(const cn_config* config, const cn_dataset* dataset, const char* embeddings_path,
                    const char* run_dir, cn_log_fn log, void* user, cn_model** out_model,
                    cn_report** out_validation_report);

/* Loads a checkpoint together with the vocab.txt, labels.txt and model.cfg
 * stored beside it. A non-NULL config replaces model.cfg; a checkpoint that
 * does not fit it fails with CN_ERR_INCOMPATIBLE. */
CN_API int cn_model_load(const char* checkpoint, const cn_config* config, cn_model** out);
CN_API int cn_model_num_classes(const cn_model* model, size_t* out);
CN_API int cn_model_parameter_count(const cn_model* model, size_t* out);
/* Valid until the model is destroyed; NULL when out of range. */
CN_API const char* cn_model_class_name(const cn_model* model, size_t index);
/* Scores are the branch-averaged class-capsule lengths. `cap` must be at
 * least the class count (else CN_ERR_BUFFER_TOO_SMALL). Empty text fails with CN_ERR_EMPTY_INPUT. */
CN_API int cn_model_predict(const cn_model* model, const char* text, double* scores, size_t cap,
                            size_t* predicted);
/* Predicts a dataset example by id, with its metadata. gold may be NULL. */
CN_API int cn_model_predict_example(const cn_model* model, const cn_dataset* dataset, const char* example_id,
                                    double* scores, size_t cap, size_t* predicted, size_t* gold);
CN_API int cn_model_evaluate(const cn_model* model, const cn_dataset* dataset, int split, cn_report** out);
CN_API void cn_model_destroy(cn_model* model);

CN_API int cn_report_accuracy(const cn_report* report, double* out);
CN_API int cn_report_total(const cn_report* report, uint64_t* out);
CN_API int cn_report_num_classes(const cn_report* report, size_t* out);
/* Row is the true class, column the predicted class. */
CN_API int cn_report_confusion(const cn_report* report, size_t true_class, size_t predicted_class, uint64_t* out);
/* Two-class reports only; class 1 is positive. */
CN_API int cn_report_binary(const cn_report* report, uint64_t* tp, uint64_t* tn, uint64_t* fp, uint64_t* fn);
/* Writes report.txt and confusion.txt. */
CN_API int cn_report_write(const cn_report* report, const char* dir);
CN_API void cn_report_destroy(cn_report* report);

/* Word-frequency comparison of one test example against the fake and real
 * halves of the training split. stopwords_path may be NULL for the
 * built-in list. Unknown ids fail with CN_ERR_NOT_FOUND. */
CN_API int cn_analyze(const cn_dataset* dataset, const char* example_id, size_t min_count,
                      const char* stopwords_path, cn_analysis** out);
CN_API int cn_analysis_rows(const cn_analysis* analysis, size_t* out);
/* `word` stays valid until the analysis is destroyed. Any out pointer may be NULL. */
CN_API int cn_analysis_row(const cn_analysis* analysis, size_t index, const char** word, double* sample,
                           double* fake, double* real);
/* Tab-separated with a header line. */
CN_API int cn_analysis_write(const cn_analysis* analysis, const char* path);
CN_API void cn_analysis_destroy(cn_analysis* analysis);

#ifdef __cplusplus
}
#endif

#endif
