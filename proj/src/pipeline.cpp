#include "sib/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "sib/report.hpp"

namespace sib::pipeline {

namespace fs = std::filesystem;

json default_config() {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["seed"] = 42;
    j["paths"] = {{"corpus", ""},      {"ground_truth", ""}, {"annotations", ""},
                  {"post_labels", ""}, {"users", ""},        {"detector", ""},
                  {"train_run", ""}};
    j["gen"] = {{"n_users", 2000},
                {"sib_prevalence", 0.04},
                {"history_quantiles", {1, 3, 8}},
                {"signal_strength", 4.0},
                {"reply_fraction", 0.3},
                {"base_distress_rate", 0.05},
                {"hard_tag_rate", 0.03},
                {"window_days", 500},
                {"max_history", 60}};
    j["detector"] = {{"encoder",
                      {{"vocab", 2048},
                       {"layers", 1},
                       {"heads", 2},
                       {"dim", 32},
                       {"max_tokens", 64},
                       {"trainable", true}}},
                     {"lr", 2e-3},
                     {"weight_decay", 0.01},
                     {"batch_size", 8},
                     {"epochs", 10},
                     {"negatives", 400},
                     {"k_folds", 5}};
    j["model"] = {{"body_encoder",
                   {{"vocab", 2048},
                    {"layers", 1},
                    {"heads", 2},
                    {"dim", 32},
                    {"max_tokens", 64},
                    {"trainable", true}}},
                  {"titletag_encoder",
                   {{"vocab", 2048},
                    {"layers", 1},
                    {"heads", 2},
                    {"dim", 32},
                    {"max_tokens", 256},
                    {"trainable", true}}},
                  {"share_encoders", false},
                  {"lstm_hidden", 24},
                  {"attention_dim", 24},
                  {"fusion_hidden", 16},
                  {"use_body", true},
                  {"use_titletag", true},
                  {"use_lstm", true},
                  {"attention_weighted_sum", false},
                  {"context",
                   {{"N", 30},
                    {"prioritize_posts", true},
                    {"replies_in_context", false},
                    {"include_prefix", true}}},
                  {"dropout", 0.05}};
    j["train"] = {{"lr_grid", {0.1, 1e-3, 2e-5}},
                  {"grad_accum_grid", {1, 2, 4, 8}},
                  {"weight_decay_grid", {0.0, 0.1}},
                  {"resample_grid", {0.04, 0.3, 0.5}},
                  {"patience", 3},
                  {"max_epochs", 30},
                  {"batch_size", 8},
                  {"k_folds", 5},
                  {"val_fraction", 0.1},
                  {"grid_search", false},
                  {"hyper",
                   {{"lr", 2e-3},
                    {"grad_accum", 1},
                    {"weight_decay", 0.01},
                    {"resample_fraction", 0.5}}}};
    j["sweep"] = {{"n_values", {1, 5, 10, 15, 30}}};
    j["explain"] = {{"exact_max", 12},
                    {"sample_m", 300},
                    {"max_users", 150},
                    {"waterfalls", 3},
                    {"use_abs", false}};
    return j;
}

namespace {

json parse_set_value(const std::string& raw) {
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded()) return json(raw);  // plain string
    return v;
}

}  // namespace

json load_config(const std::optional<std::string>& config_path,
                 const std::vector<std::string>& set_overrides,
                 const std::optional<uint64_t>& seed_override) {
    json config = default_config();
    if (config_path) {
        std::ifstream in(*config_path);
        if (!in) throw ValidationError("cannot open config file '" + *config_path + "'");
        json file_cfg;
        try {
            file_cfg = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError("config file '" + *config_path + "': " + e.what());
        }
        config.merge_patch(file_cfg);
    }
    for (const std::string& kv : set_overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects key=value, got '" + kv + "'");
        std::string key = kv.substr(0, eq);
        std::replace(key.begin(), key.end(), '.', '/');
        try {
            config[json::json_pointer("/" + key)] = parse_set_value(kv.substr(eq + 1));
        } catch (const json::exception& e) {
            throw ValidationError("--set '" + kv + "': " + e.what());
        }
    }
    if (seed_override) config["seed"] = *seed_override;
    if (config.at("schema_version").get<int>() != kSchemaVersion)
        throw ValidationError("config schema_version mismatch");
    return config;
}

std::string config_hash_hex(const json& config) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config.dump())));
    return buf;
}

GenConfig gen_config_from(const json& config) {
    const json& g = config.at("gen");
    GenConfig cfg;
    cfg.n_users = g.at("n_users").get<int>();
    cfg.sib_prevalence = g.at("sib_prevalence").get<double>();
    const auto q = g.at("history_quantiles").get<std::vector<int>>();
    if (q.size() != 3) throw ValidationError("gen.history_quantiles must have 3 entries");
    cfg.history_quantiles = {q[0], q[1], q[2]};
    cfg.signal_strength = g.at("signal_strength").get<double>();
    cfg.reply_fraction = g.at("reply_fraction").get<double>();
    cfg.base_distress_rate = g.at("base_distress_rate").get<double>();
    cfg.hard_tag_rate = g.at("hard_tag_rate").get<double>();
    cfg.window_days = g.at("window_days").get<int>();
    cfg.max_history = g.at("max_history").get<int>();
    cfg.seed = g.contains("seed") ? g.at("seed").get<uint64_t>()
                                  : config.at("seed").get<uint64_t>();
    return cfg;
}

namespace {

EncoderSpec encoder_from(const json& e) {
    EncoderSpec s;
    s.vocab = e.at("vocab").get<int>();
    s.layers = e.at("layers").get<int>();
    s.heads = e.at("heads").get<int>();
    s.dim = e.at("dim").get<int>();
    s.max_tokens = e.at("max_tokens").get<int>();
    s.trainable = e.at("trainable").get<bool>();
    return s;
}

}  // namespace

DetectorConfig detector_config_from(const json& config) {
    const json& d = config.at("detector");
    DetectorConfig cfg;
    cfg.encoder = encoder_from(d.at("encoder"));
    cfg.lr = d.at("lr").get<double>();
    cfg.weight_decay = d.at("weight_decay").get<double>();
    cfg.batch_size = d.at("batch_size").get<int>();
    cfg.epochs = d.at("epochs").get<int>();
    cfg.seed = d.contains("seed") ? d.at("seed").get<uint64_t>()
                                  : Rng(config.at("seed").get<uint64_t>()).fork("detector").seed();
    return cfg;
}

ModelConfig model_config_from(const json& config) {
    const json& m = config.at("model");
    ModelConfig cfg;
    cfg.body_encoder = encoder_from(m.at("body_encoder"));
    cfg.titletag_encoder = encoder_from(m.at("titletag_encoder"));
    cfg.share_encoders = m.at("share_encoders").get<bool>();
    cfg.lstm_hidden = m.at("lstm_hidden").get<int>();
    cfg.attention_dim = m.at("attention_dim").get<int>();
    cfg.fusion_hidden = m.at("fusion_hidden").get<int>();
    cfg.use_body = m.at("use_body").get<bool>();
    cfg.use_titletag = m.at("use_titletag").get<bool>();
    cfg.use_lstm = m.at("use_lstm").get<bool>();
    cfg.attention_weighted_sum = m.at("attention_weighted_sum").get<bool>();
    const json& c = m.at("context");
    cfg.context.N = c.at("N").get<int>();
    cfg.context.prioritize_posts = c.at("prioritize_posts").get<bool>();
    cfg.context.replies_in_context = c.at("replies_in_context").get<bool>();
    cfg.context.include_prefix = c.at("include_prefix").get<bool>();
    cfg.dropout = m.at("dropout").get<double>();
    cfg.seed = m.contains("seed") ? m.at("seed").get<uint64_t>()
                                  : Rng(config.at("seed").get<uint64_t>()).fork("model").seed();
    return cfg;
}

TrainConfig train_config_from(const json& config) {
    const json& t = config.at("train");
    TrainConfig cfg;
    cfg.lr_grid = t.at("lr_grid").get<std::vector<double>>();
    cfg.grad_accum_grid = t.at("grad_accum_grid").get<std::vector<int>>();
    cfg.weight_decay_grid = t.at("weight_decay_grid").get<std::vector<double>>();
    cfg.resample_grid = t.at("resample_grid").get<std::vector<double>>();
    cfg.patience = t.at("patience").get<int>();
    cfg.max_epochs = t.at("max_epochs").get<int>();
    cfg.batch_size = t.at("batch_size").get<int>();
    cfg.k_folds = t.at("k_folds").get<int>();
    cfg.val_fraction = t.at("val_fraction").get<double>();
    const json& h = t.at("hyper");
    cfg.hyper.lr = h.at("lr").get<double>();
    cfg.hyper.grad_accum = h.at("grad_accum").get<int>();
    cfg.hyper.weight_decay = h.at("weight_decay").get<double>();
    cfg.hyper.resample_fraction = h.at("resample_fraction").get<double>();
    cfg.seed = t.contains("seed") ? t.at("seed").get<uint64_t>()
                                  : config.at("seed").get<uint64_t>();
    return cfg;
}

namespace {

std::string utc_now_compact() {
    const auto now = std::chrono::system_clock::now();
    const int64_t secs =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    std::string iso = format_utc(secs);  // YYYY-MM-DDTHH:MM:SSZ
    std::string out;
    for (char c : iso)
        if (c != '-' && c != ':') out += c;
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

void write_run_manifest(const std::string& dir, const json& config, const std::string& name) {
    json meta;
    meta["schema_version"] = kSchemaVersion;
    meta["subcommand"] = name;
    meta["config_hash"] = config_hash_hex(config);
    meta["seed"] = config.at("seed");
    meta["timestamp"] = utc_now_compact();
    meta["config"] = config;
    write_text(dir + "/run.json", meta.dump(2) + "\n");
}

}  // namespace

std::string make_run_dir(const std::string& out_root, const json& config,
                         const std::string& name) {
    fs::create_directories(out_root);
    const std::string base =
        utc_now_compact() + "-" + config_hash_hex(config).substr(0, 8) + "-" + name;
    std::string dir = out_root + "/" + base;
    for (int suffix = 2; fs::exists(dir); ++suffix)
        dir = out_root + "/" + base + "-" + std::to_string(suffix);
    fs::create_directories(dir);
    write_run_manifest(dir, config, name);
    return dir;
}

std::string resolve_artifact(const json& config, const std::string& out_root,
                             const std::string& path_key, const std::string& filename) {
    const std::string explicit_path =
        config.at("paths").value(path_key, std::string());
    if (!explicit_path.empty()) {
        if (!fs::exists(explicit_path))
            throw ValidationError("missing upstream artifact '" + filename + "' at '" +
                                  explicit_path + "'");
        return explicit_path;
    }
    std::vector<std::string> candidates;
    if (fs::exists(out_root)) {
        for (const auto& entry : fs::directory_iterator(out_root)) {
            if (!entry.is_directory()) continue;
            const fs::path p = entry.path() / filename;
            if (fs::exists(p)) candidates.push_back(entry.path().filename().string());
        }
    }
    if (candidates.empty())
        throw ValidationError("missing upstream artifact '" + filename +
                              "' (no run under '" + out_root + "' provides it)");
    std::sort(candidates.begin(), candidates.end());
    return out_root + "/" + candidates.back() + "/" + filename;
}

// ---------------------------------------------------------------------------

std::string run_synth(const json& config, const std::string& out_root) {
    const GenConfig gen = gen_config_from(config);
    SynthResult result = generate_corpus(gen);
    const std::string dir = make_run_dir(out_root, config, "synth");
    emit_corpus(result.corpus, dir + "/corpus.jsonl");
    write_ground_truth(result.truth, dir + "/ground_truth.jsonl");
    write_post_labels(result.annotations, dir + "/annotations.jsonl");
    json summary;
    summary["interactions"] = result.corpus.size();
    summary["posts"] = result.corpus.post_count();
    summary["users"] = result.corpus.by_user().size();
    int sib_users = 0;
    for (const auto& [u, t] : result.truth.users) sib_users += t.risk;
    summary["sib_users"] = sib_users;
    summary["annotated_candidates"] = result.annotations.size();
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_ingest(const json& config, const std::string& out_root) {
    const std::string corpus_path = resolve_artifact(config, out_root, "corpus", "corpus.jsonl");
    Corpus corpus = ingest_corpus(corpus_path);
    const std::string dir = make_run_dir(out_root, config, "ingest");
    json summary;
    summary["source"] = corpus_path;
    summary["interactions"] = corpus.size();
    summary["posts"] = corpus.post_count();
    summary["replies"] = corpus.size() - corpus.post_count();
    summary["users"] = corpus.by_user().size();
    summary["threads"] = corpus.by_thread().size();
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

namespace {

std::vector<LabeledPost> assemble_post_dataset(const Corpus& corpus,
                                               const std::vector<PostLabel>& annotations,
                                               size_t negatives, uint64_t seed) {
    std::vector<LabeledPost> labeled;
    std::set<std::string> annotated_ids;
    for (const PostLabel& pl : annotations) {
        const Interaction* post = corpus.by_id(pl.post_id);
        if (!post || !post->is_post())
            throw ValidationError("annotation references unknown post '" + pl.post_id + "'");
        labeled.push_back({post, pl.label, pl.hard});
        annotated_ids.insert(pl.post_id);
    }
    const size_t pool_bound = corpus.post_count() - annotated_ids.size();
    const size_t n = std::min(negatives, pool_bound);
    for (const Interaction* neg :
         sample_negatives(corpus, n, default_sib_tags(), default_excluded_spans(), seed)) {
        if (annotated_ids.count(neg->id)) continue;  // already labeled by annotation
        labeled.push_back({neg, SibLabel::NoSib, false});
    }
    return labeled;
}

}  // namespace

std::string run_detect_train(const json& config, const std::string& out_root) {
    const std::string corpus_path = resolve_artifact(config, out_root, "corpus", "corpus.jsonl");
    const std::string ann_path =
        resolve_artifact(config, out_root, "annotations", "annotations.jsonl");
    Corpus corpus = ingest_corpus(corpus_path);
    std::vector<PostLabel> annotations = read_post_labels(ann_path);
    DetectorConfig det_cfg = detector_config_from(config);
    const size_t negatives = config.at("detector").at("negatives").get<size_t>();
    const int k = config.at("detector").at("k_folds").get<int>();

    std::vector<LabeledPost> labeled =
        assemble_post_dataset(corpus, annotations, negatives, Rng(det_cfg.seed).fork("negatives").seed());

    DetectorCv cv = train_detector(labeled, det_cfg, k);
    const std::string dir = make_run_dir(out_root, config, "detect-train");
    write_detection_metrics_csv(cv.fold_metrics, dir + "/detection_metrics.csv");

    json summary;
    {
        std::vector<double> f1s;
        for (const MetricEntry& m : cv.fold_metrics) f1s.push_back(m.weighted_f1);
        const Aggregate f1 = mean_sd(f1s);
        summary["weighted_f1_mean"] = f1.mean;
        summary["weighted_f1_sd"] = f1.sd;
    }
    int hard_count = 0;
    for (const LabeledPost& lp : labeled) hard_count += lp.hard;
    if (hard_count > 0) {
        const MetricEntry hard = evaluate_hard_subset(cv, labeled);
        summary["hard_subset_weighted_f1"] = hard.weighted_f1;
        summary["hard_instances"] = hard_count;
    }

    // Corpus-wide labeling uses a detector retrained on the full post-level
    // dataset.
    Detector full(det_cfg);
    full.train(labeled);
    full.save(dir + "/detector.ckpt");
    summary["dataset_size"] = labeled.size();
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_label(const json& config, const std::string& out_root) {
    const std::string corpus_path = resolve_artifact(config, out_root, "corpus", "corpus.jsonl");
    const std::string det_path = resolve_artifact(config, out_root, "detector", "detector.ckpt");
    Corpus corpus = ingest_corpus(corpus_path);
    Detector det = Detector::load(det_path);
    std::vector<PostLabel> labels = label_corpus(det, corpus);
    const std::string dir = make_run_dir(out_root, config, "label");
    write_post_labels(labels, dir + "/post_labels.jsonl");
    json summary;
    long sib = 0;
    for (const PostLabel& pl : labels) sib += pl.label == SibLabel::Sib;
    summary["posts_labeled"] = labels.size();
    summary["sib_posts"] = sib;
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_build_users(const json& config, const std::string& out_root) {
    const std::string corpus_path = resolve_artifact(config, out_root, "corpus", "corpus.jsonl");
    const std::string labels_path =
        resolve_artifact(config, out_root, "post_labels", "post_labels.jsonl");
    Corpus corpus = ingest_corpus(corpus_path);
    UserDataset ds = build_user_dataset(corpus, read_post_labels(labels_path));
    const std::string dir = make_run_dir(out_root, config, "build-users");
    write_user_dataset(ds, dir + "/users.jsonl", dir + "/user_stats.csv");
    json summary;
    summary["sib_users"] = ds.stats.sib_users;
    summary["nosib_users"] = ds.stats.nosib_users;
    summary["excluded_sib_users"] = ds.stats.excluded_sib_users;
    summary["excluded_nosib_users"] = ds.stats.excluded_nosib_users;
    summary["history_percentiles"] = {ds.stats.pct25, ds.stats.pct50, ds.stats.pct75};
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

namespace {

struct LoadedUserData {
    Corpus corpus;
    std::vector<UserRecord> records;
};

LoadedUserData load_user_data(const json& config, const std::string& out_root) {
    const std::string corpus_path = resolve_artifact(config, out_root, "corpus", "corpus.jsonl");
    const std::string users_path = resolve_artifact(config, out_root, "users", "users.jsonl");
    LoadedUserData data;
    data.corpus = ingest_corpus(corpus_path);
    data.records = read_user_records(users_path, data.corpus);
    return data;
}

json report_to_json(const EvalReport& r) {
    json j;
    j["balanced_accuracy"] = {{"mean", r.balanced_accuracy.mean}, {"sd", r.balanced_accuracy.sd}};
    j["recall"] = {{"mean", r.recall1.mean}, {"sd", r.recall1.sd}};
    if (r.precision1)
        j["precision"] = {{"mean", r.precision1->mean}, {"sd", r.precision1->sd}};
    else
        j["precision"] = nullptr;
    j["weighted_f1"] = {{"mean", r.weighted_f1.mean}, {"sd", r.weighted_f1.sd}};
    return j;
}

}  // namespace

std::string run_train(const json& config, const std::string& out_root) {
    LoadedUserData data = load_user_data(config, out_root);
    const ModelConfig model_cfg = model_config_from(config);
    TrainConfig tc = train_config_from(config);

    const std::string dir = make_run_dir(out_root, config, "train");
    json summary;
    TrainHyper hyper = tc.hyper;
    if (config.at("train").at("grid_search").get<bool>()) {
        GridResult grid = grid_search(data.records, data.corpus, model_cfg, tc);
        hyper = grid.best;
        json rows = json::array();
        for (const GridRow& row : grid.rows)
            rows.push_back({{"lr", row.hyper.lr},
                            {"grad_accum", row.hyper.grad_accum},
                            {"weight_decay", row.hyper.weight_decay},
                            {"resample_fraction", row.hyper.resample_fraction},
                            {"mean_val_balanced_accuracy", row.mean_val_balanced_accuracy}});
        summary["grid"] = rows;
    }
    CvResult cv = cross_validate(data.records, data.corpus, model_cfg, tc, hyper, true);
    write_eval_report_csv(dir + "/metrics.csv", {{"earlysib", cv.report}});
    write_predictions_csv(dir + "/predictions.csv", cv.report.predictions);
    for (size_t f = 0; f < cv.fold_models.size(); ++f)
        cv.fold_models[f].save(dir + "/model_fold" + std::to_string(f) + ".ckpt");

    summary["hyper"] = {{"lr", hyper.lr},
                        {"grad_accum", hyper.grad_accum},
                        {"weight_decay", hyper.weight_decay},
                        {"resample_fraction", hyper.resample_fraction}};
    summary["metrics"] = report_to_json(cv.report);
    summary["records"] = data.records.size();
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_evaluate(const json& config, const std::string& out_root) {
    LoadedUserData data = load_user_data(config, out_root);
    const std::string train_run =
        resolve_artifact(config, out_root, "train_run", "predictions.csv");
    TrainConfig tc = train_config_from(config);

    // Model predictions from the training run, keyed by user.
    std::map<std::string, std::pair<int, int>> by_user;  // user -> (label, pred)
    {
        std::ifstream in(train_run);
        if (!in) throw ValidationError("cannot open predictions '" + train_run + "'");
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            std::vector<std::string> cells;
            size_t start = 0;
            for (size_t i = 0; i <= line.size(); ++i) {
                if (i == line.size() || line[i] == ',') {
                    cells.push_back(line.substr(start, i - start));
                    start = i + 1;
                }
            }
            if (cells.size() < 5) throw ValidationError("malformed predictions row: " + line);
            by_user[cells[0]] = {std::stoi(cells[2]), std::stoi(cells[3])};
        }
    }

    auto baselines = run_baselines(data.records, tc.k_folds, tc.seed);
    std::vector<int> labels, model_preds, random_preds, majority_preds;
    for (const PredictionRecord& p : baselines.at("random").predictions) {
        auto it = by_user.find(p.user);
        if (it == by_user.end())
            throw ValidationError("user '" + p.user + "' missing from the training predictions");
        if (it->second.first != p.label)
            throw ValidationError("label mismatch for user '" + p.user +
                                  "' between train run and user dataset");
        labels.push_back(p.label);
        model_preds.push_back(it->second.second);
        random_preds.push_back(p.pred);
        majority_preds.push_back(0);
    }

    const std::string dir = make_run_dir(out_root, config, "evaluate");
    MetricEntry pooled = compute_metrics(model_preds, labels);
    McNemarResult vs_random = mcnemar(model_preds, random_preds, labels);
    McNemarResult vs_majority = mcnemar(model_preds, majority_preds, labels);

    std::vector<std::pair<std::string, EvalReport>> rows;
    rows.emplace_back("random", baselines.at("random"));
    rows.emplace_back("majority", baselines.at("majority"));
    write_eval_report_csv(dir + "/baselines.csv", rows);

    json summary;
    summary["pooled"] = {{"balanced_accuracy", pooled.balanced_accuracy},
                         {"recall", pooled.recall1},
                         {"weighted_f1", pooled.weighted_f1},
                         {"n", labels.size()}};
    if (pooled.precision1) summary["pooled"]["precision"] = *pooled.precision1;
    summary["baselines"] = {{"random", report_to_json(baselines.at("random"))},
                            {"majority", report_to_json(baselines.at("majority"))}};
    auto mcj = [](const McNemarResult& r) {
        return json{{"chi2", r.chi2}, {"b", r.b}, {"c", r.c}, {"p", r.p}};
    };
    summary["mcnemar"] = {{"model_vs_random", mcj(vs_random)},
                          {"model_vs_majority", mcj(vs_majority)}};
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_sweep(const json& config, const std::string& out_root) {
    LoadedUserData data = load_user_data(config, out_root);
    const ModelConfig model_cfg = model_config_from(config);
    const TrainConfig tc = train_config_from(config);
    const auto n_values = config.at("sweep").at("n_values").get<std::vector<int>>();

    auto points = context_window_sweep(data.records, data.corpus, model_cfg, tc, tc.hyper,
                                       n_values);
    const std::string dir = make_run_dir(out_root, config, "sweep");
    write_sweep_csv(dir + "/sweep.csv", points);
    std::vector<SvgSeriesPoint> pts;
    for (const SweepPoint& p : points)
        pts.push_back({static_cast<double>(p.n), p.balanced_accuracy.mean, p.balanced_accuracy.sd});
    svg_error_scatter(dir + "/sweep.svg", pts, "Context window (interactions)",
                      "Balanced accuracy");
    json summary;
    summary["points"] = json::array();
    for (const SweepPoint& p : points)
        summary["points"].push_back(
            {{"N", p.n}, {"mean", p.balanced_accuracy.mean}, {"sd", p.balanced_accuracy.sd}});
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_ablate(const json& config, const std::string& out_root) {
    LoadedUserData data = load_user_data(config, out_root);
    const ModelConfig model_cfg = model_config_from(config);
    const TrainConfig tc = train_config_from(config);

    auto rows = run_ablations(data.records, data.corpus, model_cfg, tc, tc.hyper);
    const std::string dir = make_run_dir(out_root, config, "ablate");
    std::vector<std::pair<std::string, EvalReport>> named;
    for (const AblationRow& row : rows) named.emplace_back(row.name, row.report);
    write_eval_report_csv(dir + "/ablations.csv", named);
    json summary;
    for (const AblationRow& row : rows) summary[row.name] = report_to_json(row.report);
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_explain(const json& config, const std::string& out_root) {
    LoadedUserData data = load_user_data(config, out_root);
    const std::string pred_path =
        resolve_artifact(config, out_root, "train_run", "predictions.csv");
    const std::string train_dir = fs::path(pred_path).parent_path().string();

    // user -> fold map from the training run, so each user is explained by
    // the model that held them out.
    std::map<std::string, int> fold_of;
    {
        std::ifstream in(pred_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const size_t c1 = line.find(',');
            const size_t c2 = line.find(',', c1 + 1);
            fold_of[line.substr(0, c1)] = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
        }
    }
    std::vector<EarlySibModel> models;
    for (int f = 0;; ++f) {
        const std::string path = train_dir + "/model_fold" + std::to_string(f) + ".ckpt";
        if (!fs::exists(path)) break;
        models.push_back(EarlySibModel::load(path));
    }
    if (models.empty())
        throw ValidationError("missing upstream artifact 'model_fold0.ckpt' in " + train_dir);

    const json& x = config.at("explain");
    ShapParams params;
    params.exact_max = x.at("exact_max").get<int>();
    params.sample_m = x.at("sample_m").get<int>();
    params.seed = config.at("seed").get<uint64_t>();
    const size_t max_users = x.at("max_users").get<size_t>();
    const int waterfalls = x.at("waterfalls").get<int>();
    const bool use_abs = x.at("use_abs").get<bool>();

    // Label-1 users first (they carry the lead-time statistic), then label-0
    // users up to the cap.
    std::vector<const UserRecord*> order;
    for (const UserRecord& r : data.records)
        if (r.label == 1) order.push_back(&r);
    for (const UserRecord& r : data.records)
        if (r.label == 0) order.push_back(&r);
    if (order.size() > max_users) order.resize(max_users);

    const std::string dir = make_run_dir(out_root, config, "explain");
    std::vector<ExplanationRow> rows;
    int rendered = 0;
    for (const UserRecord* rec : order) {
        auto fit = fold_of.find(rec->user);
        if (fit == fold_of.end()) continue;  // not part of the CV universe
        const EarlySibModel& model = models[static_cast<size_t>(fit->second) % models.size()];
        auto ctx = resolve_context(data.corpus, select_context(*rec, model.config().context));
        ExplanationRow row;
        row.expl = explain_context(model, ctx, params, rec->user);
        row.score = complexity(row.expl);
        if (rec->label == 1 && rec->first_sib_time)
            row.lead = lead_time(row.expl, *rec, use_abs);
        if (rec->label == 1 && rendered < waterfalls) {
            render_waterfall(row.expl, dir + "/waterfall_" + rec->user);
            ++rendered;
        }
        rows.push_back(std::move(row));
    }
    write_explanations_jsonl(rows, dir + "/explanations.jsonl");
    write_cohort_summary_csv(rows, dir + "/cohort_summary.csv");

    const auto chist = complexity_histogram(rows);
    std::vector<double> cedges;
    for (int i = 0; i <= 10; ++i) cedges.push_back(i / 10.0);
    svg_histogram(dir + "/complexity_hist.svg", cedges, chist,
                  "Normalized complexity of explanations", "Users");
    const auto lhist = lead_time_histogram(rows);
    std::vector<double> ledges;
    for (size_t i = 0; i <= lhist.size(); ++i) ledges.push_back(static_cast<double>(10 * i));
    svg_histogram(dir + "/leadtime_hist.svg", ledges, lhist, "Days before SIB post", "Users");

    json summary;
    summary["explained_users"] = rows.size();
    double csum = 0;
    long cn = 0;
    for (const ExplanationRow& row : rows)
        if (row.score.defined) {
            csum += row.score.entropy;
            ++cn;
        }
    summary["mean_complexity"] = cn ? csum / cn : 0.0;
    summary["complexity_histogram"] = chist;
    summary["leadtime_histogram"] = lhist;
    long under_one_day = 0, leads = 0;
    for (const ExplanationRow& row : rows)
        if (row.lead) {
            ++leads;
            under_one_day += row.lead->days_before_sib < 1;
        }
    summary["lead_times"] = leads;
    summary["lead_under_one_day"] = under_one_day;
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
    return dir;
}

std::string run_report(const json& config, const std::string& out_root) {
    if (!fs::exists(out_root)) throw ValidationError("no runs under '" + out_root + "'");
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(out_root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "run.json"))
            dirs.push_back(entry.path().string());
    }
    if (dirs.empty()) throw ValidationError("no runs under '" + out_root + "'");
    std::sort(dirs.begin(), dirs.end());

    json combined = json::array();
    for (const std::string& d : dirs) {
        std::ifstream in(d + "/run.json");
        json meta = json::parse(in);
        if (meta.at("schema_version").get<int>() != kSchemaVersion)
            throw ValidationError("run '" + d + "' has a mismatched schema version");
        json entry;
        entry["dir"] = fs::path(d).filename().string();
        entry["subcommand"] = meta.at("subcommand");
        entry["config_hash"] = meta.at("config_hash");
        if (fs::exists(d + "/summary.json")) {
            std::ifstream s(d + "/summary.json");
            entry["summary"] = json::parse(s);
        }
        combined.push_back(std::move(entry));
    }
    const std::string dir = make_run_dir(out_root, config, "report");
    write_text(dir + "/report.json", combined.dump(2) + "\n");

    std::string md = "# Run report\n\n| run | subcommand | config |\n|---|---|---|\n";
    for (const auto& entry : combined)
        md += "| " + entry.at("dir").get<std::string>() + " | " +
              entry.at("subcommand").get<std::string>() + " | " +
              entry.at("config_hash").get<std::string>() + " |\n";
    write_text(dir + "/report.md", md);
    return dir;
}

}  // namespace sib::pipeline
