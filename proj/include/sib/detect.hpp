#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sib/corpus.hpp"
#include "sib/encoder.hpp"
#include "sib/trainer.hpp"

namespace sib {

struct DetectorConfig {
    EncoderSpec encoder{.vocab = 8192, .layers = 2, .heads = 4, .dim = 128, .max_tokens = 128};
    double lr = 1e-3;
    double weight_decay = 0.01;
    int batch_size = 8;
    int epochs = 6;
    uint64_t seed = 42;

    void validate() const;
};

struct LabeledPost {
    const Interaction* post = nullptr;
    SibLabel label = SibLabel::NoSib;
    bool hard = false;
};

// Binary SIB/No-SIB sequence classifier over title + " " + body.
class Detector {
public:
    explicit Detector(DetectorConfig cfg);

    const DetectorConfig& config() const { return cfg_; }
    std::vector<nn::Parameter*> params();

    void train(const std::vector<LabeledPost>& labeled);
    // (p_nosib, p_sib), summing to 1.
    std::pair<double, double> predict_proba(const Interaction& post) const;
    SibLabel predict(const Interaction& post) const;

    void save(const std::string& path) const;
    static Detector load(const std::string& path);

private:
    nn::Var build_logits(nn::Graph& g, const Interaction& post, double dropout) const;

    DetectorConfig cfg_;
    Tokenizer tok_;
    std::unique_ptr<TransformerEncoder> enc_;
    std::unique_ptr<nn::Parameter> head_w_, head_b_;
};

struct DetectorCv {
    std::vector<std::vector<size_t>> fold_test_indices;
    std::vector<Detector> fold_detectors;  // detector f trained with fold f held out
    std::vector<MetricEntry> fold_metrics;
};

// Stratified k-fold protocol over the post-level dataset.
DetectorCv train_detector(const std::vector<LabeledPost>& labeled, const DetectorConfig& cfg,
                          int k_folds);

// Weighted F1 on the hard instances only, each scored by the detector of the
// fold that held it out.
MetricEntry evaluate_hard_subset(const DetectorCv& cv, const std::vector<LabeledPost>& labeled);

// One label per post (replies are out of detection scope), argmax decision.
std::vector<PostLabel> label_corpus(const Detector& detector, const Corpus& corpus);

// Per-fold CSV with columns (fold, weighted_f1, recall, precision, tn, fp, fn, tp).
void write_detection_metrics_csv(const std::vector<MetricEntry>& folds, const std::string& path);

std::string detector_config_to_json(const DetectorConfig& cfg);
DetectorConfig detector_config_from_json(const std::string& text);

}  // namespace sib
