#include "sib/detect.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "sib/optim.hpp"

namespace sib {

using nlohmann::json;
using nn::Graph;
using nn::Var;

void DetectorConfig::validate() const {
    encoder.validate();
    if (encoder.max_tokens < 8) throw ValidationError("detector: max_tokens must be >= 8");
    if (lr <= 0 || weight_decay < 0 || batch_size < 1 || epochs < 1)
        throw ValidationError("detector: hyperparameters must be positive");
}

Detector::Detector(DetectorConfig cfg) : cfg_(std::move(cfg)), tok_(cfg_.encoder.vocab) {
    cfg_.validate();
    Rng rng = Rng(cfg_.seed).fork("detector-init");
    enc_ = std::make_unique<TransformerEncoder>(cfg_.encoder, "detector", rng);
    head_w_ = std::make_unique<nn::Parameter>("head.w",
                                              nn::init_xavier(rng, cfg_.encoder.dim, 2));
    head_b_ = std::make_unique<nn::Parameter>("head.b", nn::Mat::Zero(1, 2));
}

std::vector<nn::Parameter*> Detector::params() {
    std::vector<nn::Parameter*> out = enc_->params();
    out.push_back(head_w_.get());
    out.push_back(head_b_.get());
    return out;
}

Var Detector::build_logits(Graph& g, const Interaction& post, double dropout) const {
    const std::string text = (post.title ? *post.title : "") + " " + post.body;
    Var cls = enc_->encode_cls(g, enc_->prepare_head(tok_.tokenize(text)), dropout);
    cls = g.dropout(cls, dropout);
    return g.add_rowvec(g.matmul(cls, g.param(*head_w_)), g.param(*head_b_));
}

void Detector::train(const std::vector<LabeledPost>& labeled) {
    if (labeled.empty()) throw ValidationError("detector train: empty dataset");
    nn::AdamW opt(params(), cfg_.lr, cfg_.weight_decay);
    Rng shuffle_rng = Rng(cfg_.seed).fork("detector-shuffle");
    Rng dropout_rng = Rng(cfg_.seed).fork("detector-dropout");
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
        std::vector<size_t> order(labeled.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg_.batch_size)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg_.batch_size));
            Graph g;
            g.set_training(&dropout_rng);
            Var loss;
            for (size_t i = at; i < end; ++i) {
                const LabeledPost& lp = labeled[order[i]];
                Var item = g.cross_entropy_logits(build_logits(g, *lp.post, 0.1),
                                                  static_cast<int>(lp.label));
                loss = i == at ? item : g.add(loss, item);
            }
            loss = g.scale(loss, 1.0 / static_cast<double>(end - at));
            if (!std::isfinite(loss.val()(0, 0)))
                throw std::runtime_error("detector train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            opt.zero_grad();
            g.backward(loss);
            opt.step();
        }
    }
}

std::pair<double, double> Detector::predict_proba(const Interaction& post) const {
    Graph g;
    Var logits = build_logits(g, post, 0.0);
    Eigen::RowVectorXd p = nn::softmax_row(logits.val().row(0));
    return {p(0), p(1)};
}

SibLabel Detector::predict(const Interaction& post) const {
    auto [p0, p1] = predict_proba(post);
    return p1 > p0 ? SibLabel::Sib : SibLabel::NoSib;
}

DetectorCv train_detector(const std::vector<LabeledPost>& labeled, const DetectorConfig& cfg,
                          int k_folds) {
    if (labeled.empty()) throw ValidationError("train_detector: empty dataset");
    std::vector<int> labels;
    labels.reserve(labeled.size());
    for (const LabeledPost& lp : labeled) labels.push_back(static_cast<int>(lp.label));
    DetectorCv cv;
    cv.fold_test_indices = stratified_kfold(labels, k_folds, cfg.seed);
    for (int f = 0; f < k_folds; ++f) {
        const auto& test_idx = cv.fold_test_indices[static_cast<size_t>(f)];
        std::vector<bool> in_test(labeled.size(), false);
        for (size_t i : test_idx) in_test[i] = true;
        std::vector<LabeledPost> train_set;
        for (size_t i = 0; i < labeled.size(); ++i)
            if (!in_test[i]) train_set.push_back(labeled[i]);

        DetectorConfig fold_cfg = cfg;
        fold_cfg.seed = Rng(cfg.seed).fork("detector-fold").fork(static_cast<uint64_t>(f)).seed();
        Detector det(fold_cfg);
        det.train(train_set);

        std::vector<int> preds, fold_labels;
        for (size_t i : test_idx) {
            preds.push_back(static_cast<int>(det.predict(*labeled[i].post)));
            fold_labels.push_back(static_cast<int>(labeled[i].label));
        }
        cv.fold_metrics.push_back(compute_metrics(preds, fold_labels));
        cv.fold_detectors.push_back(std::move(det));
    }
    return cv;
}

MetricEntry evaluate_hard_subset(const DetectorCv& cv, const std::vector<LabeledPost>& labeled) {
    std::vector<int> preds, labels;
    for (size_t f = 0; f < cv.fold_test_indices.size(); ++f) {
        for (size_t i : cv.fold_test_indices[f]) {
            if (!labeled[i].hard) continue;
            preds.push_back(static_cast<int>(cv.fold_detectors[f].predict(*labeled[i].post)));
            labels.push_back(static_cast<int>(labeled[i].label));
        }
    }
    if (preds.empty()) throw ValidationError("evaluate_hard_subset: no hard instances");
    return compute_metrics(preds, labels);
}

std::vector<PostLabel> label_corpus(const Detector& detector, const Corpus& corpus) {
    std::vector<PostLabel> out;
    for (const Interaction& ia : corpus.interactions()) {
        if (!ia.is_post()) continue;
        out.push_back({ia.id, detector.predict(ia), false});
    }
    return out;
}

void write_detection_metrics_csv(const std::vector<MetricEntry>& folds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics csv '" + path + "'");
    out << "fold,weighted_f1,recall,precision,tn,fp,fn,tp\n";
    for (size_t f = 0; f < folds.size(); ++f) {
        const MetricEntry& m = folds[f];
        out << f << ',' << m.weighted_f1 << ',' << m.recall1 << ',';
        if (m.precision1) out << *m.precision1;
        out << ',' << m.counts.tn << ',' << m.counts.fp << ',' << m.counts.fn << ','
            << m.counts.tp << "\n";
    }
}

std::string detector_config_to_json(const DetectorConfig& cfg) {
    json j{{"encoder",
            {{"vocab", cfg.encoder.vocab},
             {"layers", cfg.encoder.layers},
             {"heads", cfg.encoder.heads},
             {"dim", cfg.encoder.dim},
             {"max_tokens", cfg.encoder.max_tokens},
             {"trainable", cfg.encoder.trainable}}},
           {"lr", cfg.lr},
           {"weight_decay", cfg.weight_decay},
           {"batch_size", cfg.batch_size},
           {"epochs", cfg.epochs},
           {"seed", cfg.seed}};
    return j.dump();
}

DetectorConfig detector_config_from_json(const std::string& text) {
    json j = json::parse(text);
    DetectorConfig cfg;
    const json& e = j.at("encoder");
    cfg.encoder.vocab = e.at("vocab").get<int>();
    cfg.encoder.layers = e.at("layers").get<int>();
    cfg.encoder.heads = e.at("heads").get<int>();
    cfg.encoder.dim = e.at("dim").get<int>();
    cfg.encoder.max_tokens = e.at("max_tokens").get<int>();
    cfg.encoder.trainable = e.at("trainable").get<bool>();
    cfg.lr = j.at("lr").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
}

void Detector::save(const std::string& path) const {
    save_checkpoint(path, "detector", detector_config_to_json(cfg_),
                    const_cast<Detector*>(this)->params());
}

Detector Detector::load(const std::string& path) {
    CheckpointData ckpt = load_checkpoint(path);
    if (ckpt.kind != "detector")
        throw ValidationError("checkpoint '" + path + "' is not a detector");
    Detector det(detector_config_from_json(ckpt.config_json));
    load_into_params(ckpt, det.params());
    return det;
}

}  // namespace sib
