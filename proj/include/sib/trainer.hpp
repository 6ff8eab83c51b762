#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sib/earlysib.hpp"
#include "sib/userset.hpp"

namespace sib {

struct ConfusionCounts {
    long tn = 0, fp = 0, fn = 0, tp = 0;
};

struct MetricEntry {
    ConfusionCounts counts;
    double balanced_accuracy = 0.0;
    double recall1 = 0.0;
    std::optional<double> precision1;  // absent when nothing is predicted positive
    double weighted_f1 = 0.0;
};

MetricEntry compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

struct PredictionRecord {
    std::string user;
    int fold = 0;
    int label = 0;
    int pred = 0;
    double p_sib = 0.0;
};

struct Aggregate {
    double mean = 0.0, sd = 0.0;
};
Aggregate mean_sd(const std::vector<double>& xs);

struct EvalReport {
    std::vector<MetricEntry> folds;
    Aggregate balanced_accuracy, recall1, weighted_f1;
    std::optional<Aggregate> precision1;  // absent unless defined in every fold
    std::vector<PredictionRecord> predictions;

    void finalize();  // fills the aggregates from `folds`
};

// One hyperparameter point out of the grids.
struct TrainHyper {
    double lr = 1e-3;
    int grad_accum = 1;
    double weight_decay = 0.1;
    double resample_fraction = 0.5;
};

struct TrainConfig {
    std::vector<double> lr_grid{0.1, 1e-3, 2e-5};
    std::vector<int> grad_accum_grid{1, 2, 4, 8};
    std::vector<double> weight_decay_grid{0.0, 0.1};
    std::vector<double> resample_grid{0.04, 0.3, 0.5};
    int patience = 3;
    int max_epochs = 12;
    int batch_size = 8;
    int k_folds = 5;
    uint64_t seed = 42;
    double val_fraction = 0.1;  // epoch-wise validation carve, stratified
    TrainHyper hyper;           // the point used outside grid search

    void validate() const;
};

// Seeded stratified partition into k disjoint test splits covering all
// indices; per-fold label proportions within one record of the global ones.
std::vector<std::vector<size_t>> stratified_kfold(const std::vector<int>& labels, int k,
                                                  uint64_t seed);
std::vector<std::vector<size_t>> stratified_kfold(const std::vector<UserRecord>& records, int k,
                                                  uint64_t seed);

struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double val_balanced_accuracy = 0.0;
};

struct FoldTrainResult {
    EarlySibModel model;
    std::vector<EpochStat> curve;
    double best_val_balanced_accuracy = 0.0;
    int best_epoch = 0;
};

// Trains one fold: resamples the training records (validation and test are
// never resampled), optimizes with AdamW, early-stops on validation balanced
// accuracy and returns the best-epoch parameters.
FoldTrainResult train_fold(const ModelConfig& model_cfg, const Corpus& corpus,
                           const std::vector<UserRecord>& train_records,
                           const std::vector<UserRecord>& val_records, const TrainConfig& tc,
                           const TrainHyper& hyper, uint64_t fold_seed);

struct CvResult {
    EvalReport report;
    std::vector<double> fold_val_balanced_accuracy;
    std::vector<std::vector<size_t>> fold_test_indices;
    std::vector<EarlySibModel> fold_models;
};

CvResult cross_validate(const std::vector<UserRecord>& records, const Corpus& corpus,
                        const ModelConfig& model_cfg, const TrainConfig& tc,
                        const TrainHyper& hyper, bool keep_models = false);

// Random-coin and always-majority baselines over the same fold protocol.
std::map<std::string, EvalReport> run_baselines(const std::vector<UserRecord>& records, int k,
                                                uint64_t seed);

struct McNemarResult {
    double chi2 = 0.0;
    long b = 0;  // A correct, B wrong
    long c = 0;  // A wrong, B correct
    double p = 1.0;
};

McNemarResult mcnemar(const std::vector<int>& preds_a, const std::vector<int>& preds_b,
                      const std::vector<int>& labels);

struct SweepPoint {
    int n = 0;
    Aggregate balanced_accuracy;
};

std::vector<SweepPoint> context_window_sweep(const std::vector<UserRecord>& records,
                                             const Corpus& corpus, const ModelConfig& model_cfg,
                                             const TrainConfig& tc, const TrainHyper& hyper,
                                             const std::vector<int>& n_values);

struct AblationRow {
    std::string name;
    EvalReport report;
};

// The component ablations plus the input-configuration variants, all under
// one fold split so rows are pairwise comparable.
std::vector<AblationRow> run_ablations(const std::vector<UserRecord>& records,
                                       const Corpus& corpus, const ModelConfig& base_cfg,
                                       const TrainConfig& tc, const TrainHyper& hyper);

struct GridRow {
    TrainHyper hyper;
    double mean_val_balanced_accuracy = 0.0;
};

struct GridResult {
    TrainHyper best;
    std::vector<GridRow> rows;
};

// Full grid over the TrainConfig grids, selected by mean validation balanced
// accuracy across folds; ties break toward the smaller learning rate.
GridResult grid_search(const std::vector<UserRecord>& records, const Corpus& corpus,
                       const ModelConfig& model_cfg, const TrainConfig& tc);

}  // namespace sib
