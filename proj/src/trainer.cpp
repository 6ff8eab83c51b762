#include "sib/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sib/optim.hpp"

namespace sib {

using nn::Graph;
using nn::Var;

MetricEntry compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw ValidationError("compute_metrics: length mismatch");
    if (predictions.empty()) throw ValidationError("compute_metrics: empty input");
    MetricEntry m;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i], l = labels[i];
        if ((p != 0 && p != 1) || (l != 0 && l != 1))
            throw ValidationError("compute_metrics: entries must be binary");
        if (l == 1)
            (p == 1 ? m.counts.tp : m.counts.fn)++;
        else
            (p == 0 ? m.counts.tn : m.counts.fp)++;
    }
    const long pos = m.counts.tp + m.counts.fn;
    const long neg = m.counts.tn + m.counts.fp;
    // Balanced accuracy: mean recall over the classes present.
    double recall_sum = 0.0;
    int classes = 0;
    if (pos > 0) {
        recall_sum += static_cast<double>(m.counts.tp) / pos;
        ++classes;
    }
    if (neg > 0) {
        recall_sum += static_cast<double>(m.counts.tn) / neg;
        ++classes;
    }
    m.balanced_accuracy = recall_sum / classes;
    m.recall1 = pos > 0 ? static_cast<double>(m.counts.tp) / pos : 0.0;
    const long predicted_pos = m.counts.tp + m.counts.fp;
    if (predicted_pos > 0) m.precision1 = static_cast<double>(m.counts.tp) / predicted_pos;

    double weighted_f1 = 0.0;
    const double n = static_cast<double>(labels.size());
    for (int cls = 0; cls < 2; ++cls) {
        const long support = cls == 1 ? pos : neg;
        if (support == 0) continue;
        const long tp_c = cls == 1 ? m.counts.tp : m.counts.tn;
        const long pred_c = cls == 1 ? predicted_pos : m.counts.tn + m.counts.fn;
        const double prec = pred_c > 0 ? static_cast<double>(tp_c) / pred_c : 0.0;
        const double rec = static_cast<double>(tp_c) / support;
        const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        weighted_f1 += f1 * (support / n);
    }
    m.weighted_f1 = weighted_f1;
    return m;
}

Aggregate mean_sd(const std::vector<double>& xs) {
    Aggregate a;
    if (xs.empty()) return a;
    for (double x : xs) a.mean += x;
    a.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - a.mean) * (x - a.mean);
        a.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return a;
}

void EvalReport::finalize() {
    std::vector<double> ba, rec, f1, prec;
    bool precision_everywhere = !folds.empty();
    for (const MetricEntry& m : folds) {
        ba.push_back(m.balanced_accuracy);
        rec.push_back(m.recall1);
        f1.push_back(m.weighted_f1);
        if (m.precision1)
            prec.push_back(*m.precision1);
        else
            precision_everywhere = false;
    }
    balanced_accuracy = mean_sd(ba);
    recall1 = mean_sd(rec);
    weighted_f1 = mean_sd(f1);
    precision1 = precision_everywhere ? std::optional<Aggregate>(mean_sd(prec)) : std::nullopt;
}

void TrainConfig::validate() const {
    if (patience < 1) throw ValidationError("train: patience must be >= 1");
    if (max_epochs < 1 || batch_size < 1 || k_folds < 2)
        throw ValidationError("train: invalid epochs/batch/folds");
    if (lr_grid.empty() || grad_accum_grid.empty() || weight_decay_grid.empty() ||
        resample_grid.empty())
        throw ValidationError("train: grids must be nonempty");
    if (!(val_fraction > 0.0 && val_fraction < 0.5))
        throw ValidationError("train: val_fraction must be in (0,0.5)");
}

std::vector<std::vector<size_t>> stratified_kfold(const std::vector<int>& labels, int k,
                                                  uint64_t seed) {
    if (k < 2) throw ValidationError("stratified_kfold: k must be >= 2");
    std::vector<size_t> by_class[2];
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ValidationError("stratified_kfold: labels must be binary");
        by_class[labels[i]].push_back(i);
    }
    for (int cls = 0; cls < 2; ++cls)
        if (static_cast<int>(by_class[cls].size()) < k)
            throw ValidationError("stratified_kfold: class " + std::to_string(cls) +
                                  " has fewer than k records");
    Rng rng = Rng(seed).fork("kfold");
    std::vector<std::vector<size_t>> folds(static_cast<size_t>(k));
    for (int cls = 0; cls < 2; ++cls) {
        rng.shuffle(by_class[cls]);
        for (size_t i = 0; i < by_class[cls].size(); ++i)
            folds[i % static_cast<size_t>(k)].push_back(by_class[cls][i]);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::vector<std::vector<size_t>> stratified_kfold(const std::vector<UserRecord>& records, int k,
                                                  uint64_t seed) {
    std::vector<int> labels;
    labels.reserve(records.size());
    for (const UserRecord& r : records) labels.push_back(r.label);
    return stratified_kfold(labels, k, seed);
}

namespace {

struct PreparedRecord {
    const UserRecord* record = nullptr;
    std::vector<ContextItem> context;
};

std::vector<PreparedRecord> prepare(const std::vector<UserRecord>& records, const Corpus& corpus,
                                    const ContextConfig& ctx_cfg) {
    std::vector<PreparedRecord> out;
    out.reserve(records.size());
    for (const UserRecord& rec : records) {
        PreparedRecord pr;
        pr.record = &rec;
        pr.context = resolve_context(corpus, select_context(rec, ctx_cfg));
        out.push_back(std::move(pr));
    }
    return out;
}

int predict_one(const EarlySibModel& model, const std::vector<ContextItem>& ctx, double* p_sib) {
    ForwardResult r = model.forward(ctx);
    if (p_sib) *p_sib = r.probability_sib;
    return r.logits(1) > r.logits(0) ? 1 : 0;
}

double validation_balanced_accuracy(const EarlySibModel& model,
                                    const std::vector<PreparedRecord>& val) {
    std::vector<int> preds, labels;
    preds.reserve(val.size());
    for (const PreparedRecord& pr : val) {
        preds.push_back(predict_one(model, pr.context, nullptr));
        labels.push_back(pr.record->label);
    }
    return compute_metrics(preds, labels).balanced_accuracy;
}

// Stratified validation carve; the remainder stays for training.
void carve_validation(const std::vector<UserRecord>& records, double fraction, uint64_t seed,
                      std::vector<UserRecord>& train_out, std::vector<UserRecord>& val_out) {
    std::vector<size_t> by_class[2];
    for (size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);
    Rng rng = Rng(seed).fork("val-carve");
    std::vector<bool> in_val(records.size(), false);
    for (int cls = 0; cls < 2; ++cls) {
        auto& idx = by_class[cls];
        if (idx.size() < 2) continue;  // too small to split; keep for training
        rng.shuffle(idx);
        size_t take = static_cast<size_t>(
            std::max(1.0, std::floor(fraction * static_cast<double>(idx.size()))));
        take = std::min(take, idx.size() - 1);
        for (size_t i = 0; i < take; ++i) in_val[idx[i]] = true;
    }
    for (size_t i = 0; i < records.size(); ++i)
        (in_val[i] ? val_out : train_out).push_back(records[i]);
}

}  // namespace

FoldTrainResult train_fold(const ModelConfig& model_cfg, const Corpus& corpus,
                           const std::vector<UserRecord>& train_records,
                           const std::vector<UserRecord>& val_records, const TrainConfig& tc,
                           const TrainHyper& hyper, uint64_t fold_seed) {
    tc.validate();
    Rng fold_rng(fold_seed);

    // Resample only the training records; natural class balance stays in place
    // for validation and test.
    std::vector<UserRecord> resampled =
        resample_training(train_records, hyper.resample_fraction, fold_rng.fork("resample").seed());

    ModelConfig cfg = model_cfg;
    cfg.seed = fold_rng.fork("model-init").seed();
    EarlySibModel model(cfg);
    nn::AdamW opt(model.params(), hyper.lr, hyper.weight_decay);

    std::vector<PreparedRecord> train = prepare(resampled, corpus, cfg.context);
    std::vector<PreparedRecord> val = prepare(val_records, corpus, cfg.context);

    FoldTrainResult out{std::move(model), {}, -1.0, 0};
    std::vector<nn::Mat> best_snapshot = nn::snapshot_params(out.model.params());
    Rng shuffle_rng = fold_rng.fork("shuffle");
    Rng dropout_rng = fold_rng.fork("dropout");
    int since_best = 0;

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        size_t batches = 0, pending = 0;
        opt.zero_grad();
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(tc.batch_size)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(tc.batch_size));
            Graph g;
            g.set_training(&dropout_rng);
            Var batch_loss;
            for (size_t i = at; i < end; ++i) {
                const PreparedRecord& pr = train[order[i]];
                Var item = g.cross_entropy_logits(out.model.build_logits(g, pr.context),
                                                  pr.record->label);
                batch_loss = i == at ? item : g.add(batch_loss, item);
            }
            batch_loss = g.scale(batch_loss, 1.0 / static_cast<double>(end - at));
            const double loss_value = batch_loss.val()(0, 0);
            if (!std::isfinite(loss_value))
                throw std::runtime_error("train_fold: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches));
            epoch_loss += loss_value;
            ++batches;
            g.backward(g.scale(batch_loss, 1.0 / static_cast<double>(hyper.grad_accum)));
            if (++pending == static_cast<size_t>(hyper.grad_accum)) {
                opt.step();
                opt.zero_grad();
                pending = 0;
            }
        }
        if (pending > 0) {
            opt.step();
            opt.zero_grad();
        }

        const double val_ba = validation_balanced_accuracy(out.model, val);
        out.curve.push_back({epoch, batches ? epoch_loss / static_cast<double>(batches) : 0.0,
                             val_ba});
        if (val_ba > out.best_val_balanced_accuracy) {
            out.best_val_balanced_accuracy = val_ba;
            out.best_epoch = epoch;
            best_snapshot = nn::snapshot_params(out.model.params());
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    nn::restore_params(out.model.params(), best_snapshot);
    return out;
}

CvResult cross_validate(const std::vector<UserRecord>& records, const Corpus& corpus,
                        const ModelConfig& model_cfg, const TrainConfig& tc,
                        const TrainHyper& hyper, bool keep_models) {
    tc.validate();
    CvResult cv;
    cv.fold_test_indices = stratified_kfold(records, tc.k_folds, tc.seed);
    for (int f = 0; f < tc.k_folds; ++f) {
        const auto& test_idx = cv.fold_test_indices[static_cast<size_t>(f)];
        std::vector<bool> in_test(records.size(), false);
        for (size_t i : test_idx) in_test[i] = true;
        std::vector<UserRecord> rest;
        for (size_t i = 0; i < records.size(); ++i)
            if (!in_test[i]) rest.push_back(records[i]);

        std::vector<UserRecord> train, val;
        const uint64_t fold_seed = Rng(tc.seed).fork("fold").fork(static_cast<uint64_t>(f)).seed();
        carve_validation(rest, tc.val_fraction, fold_seed, train, val);
        FoldTrainResult ft = train_fold(model_cfg, corpus, train, val, tc, hyper, fold_seed);
        cv.fold_val_balanced_accuracy.push_back(ft.best_val_balanced_accuracy);

        std::vector<int> preds, labels;
        for (size_t i : test_idx) {
            const UserRecord& rec = records[i];
            auto ctx = resolve_context(corpus, select_context(rec, model_cfg.context));
            double p = 0.0;
            const int pred = predict_one(ft.model, ctx, &p);
            preds.push_back(pred);
            labels.push_back(rec.label);
            cv.report.predictions.push_back({rec.user, f, rec.label, pred, p});
        }
        cv.report.folds.push_back(compute_metrics(preds, labels));
        if (keep_models) cv.fold_models.push_back(std::move(ft.model));
    }
    cv.report.finalize();
    return cv;
}

std::map<std::string, EvalReport> run_baselines(const std::vector<UserRecord>& records, int k,
                                                uint64_t seed) {
    auto folds = stratified_kfold(records, k, seed);
    std::map<std::string, EvalReport> out;
    Rng coin = Rng(seed).fork("random-baseline");
    for (const char* name : {"random", "majority"}) out[name] = EvalReport{};
    for (int f = 0; f < k; ++f) {
        std::vector<int> labels, rand_preds, majority_preds;
        for (size_t i : folds[static_cast<size_t>(f)]) {
            labels.push_back(records[i].label);
            const int rp = coin.bernoulli(0.5) ? 1 : 0;
            rand_preds.push_back(rp);
            majority_preds.push_back(0);
            out["random"].predictions.push_back({records[i].user, f, records[i].label, rp, 0.5});
            out["majority"].predictions.push_back({records[i].user, f, records[i].label, 0, 0.0});
        }
        out["random"].folds.push_back(compute_metrics(rand_preds, labels));
        out["majority"].folds.push_back(compute_metrics(majority_preds, labels));
    }
    out["random"].finalize();
    out["majority"].finalize();
    return out;
}

McNemarResult mcnemar(const std::vector<int>& preds_a, const std::vector<int>& preds_b,
                      const std::vector<int>& labels) {
    if (preds_a.size() != labels.size() || preds_b.size() != labels.size())
        throw ValidationError("mcnemar: misaligned prediction lists");
    McNemarResult r;
    for (size_t i = 0; i < labels.size(); ++i) {
        const bool a_ok = preds_a[i] == labels[i];
        const bool b_ok = preds_b[i] == labels[i];
        if (a_ok && !b_ok) ++r.b;
        if (!a_ok && b_ok) ++r.c;
    }
    if (r.b + r.c == 0) {
        r.chi2 = 0.0;
        r.p = 1.0;
        return r;
    }
    const double diff = std::abs(static_cast<double>(r.b - r.c)) - 1.0;
    r.chi2 = diff * diff / static_cast<double>(r.b + r.c);
    r.p = std::erfc(std::sqrt(r.chi2 / 2.0));  // chi-square(1) survival
    return r;
}

std::vector<SweepPoint> context_window_sweep(const std::vector<UserRecord>& records,
                                             const Corpus& corpus, const ModelConfig& model_cfg,
                                             const TrainConfig& tc, const TrainHyper& hyper,
                                             const std::vector<int>& n_values) {
    std::vector<SweepPoint> out;
    for (int n : n_values) {
        if (n < 1 || n > 30) throw ValidationError("sweep: N values must lie in [1,30]");
        ModelConfig cfg = model_cfg;
        cfg.context.N = n;
        CvResult cv = cross_validate(records, corpus, cfg, tc, hyper);
        out.push_back({n, cv.report.balanced_accuracy});
    }
    return out;
}

std::vector<AblationRow> run_ablations(const std::vector<UserRecord>& records,
                                       const Corpus& corpus, const ModelConfig& base_cfg,
                                       const TrainConfig& tc, const TrainHyper& hyper) {
    std::vector<std::pair<std::string, ModelConfig>> variants;
    auto with = [&](const std::string& name, auto mutate) {
        ModelConfig cfg = base_cfg;
        mutate(cfg);
        variants.emplace_back(name, cfg);
    };
    with("full", [](ModelConfig&) {});
    with("B_only", [](ModelConfig& c) {
        c.use_titletag = false;
        c.use_lstm = false;
    });
    with("T_only", [](ModelConfig& c) {
        c.use_body = false;
        c.use_lstm = false;
    });
    with("BT_no_L", [](ModelConfig& c) { c.use_lstm = false; });
    with("BL_no_T", [](ModelConfig& c) { c.use_titletag = false; });
    with("replies_in_context", [](ModelConfig& c) { c.context.replies_in_context = true; });
    with("no_post_prioritization", [](ModelConfig& c) { c.context.prioritize_posts = false; });
    with("no_prefix", [](ModelConfig& c) { c.context.include_prefix = false; });

    std::vector<AblationRow> out;
    for (auto& [name, cfg] : variants) {
        // Same TrainConfig seed everywhere: identical fold splits keep the
        // rows pairwise comparable.
        CvResult cv = cross_validate(records, corpus, cfg, tc, hyper);
        out.push_back({name, std::move(cv.report)});
    }
    return out;
}

GridResult grid_search(const std::vector<UserRecord>& records, const Corpus& corpus,
                       const ModelConfig& model_cfg, const TrainConfig& tc) {
    tc.validate();
    GridResult result;
    double best_score = -1.0;
    double best_lr = 0.0;
    for (double lr : tc.lr_grid)
        for (int accum : tc.grad_accum_grid)
            for (double wd : tc.weight_decay_grid)
                for (double rs : tc.resample_grid) {
                    TrainHyper h{lr, accum, wd, rs};
                    CvResult cv = cross_validate(records, corpus, model_cfg, tc, h);
                    const double score = mean_sd(cv.fold_val_balanced_accuracy).mean;
                    result.rows.push_back({h, score});
                    const bool better =
                        score > best_score ||
                        (score == best_score && lr < best_lr);
                    if (better) {
                        best_score = score;
                        best_lr = lr;
                        result.best = h;
                    }
                }
    return result;
}

}  // namespace sib
