#include "sib/earlysib.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sib/optim.hpp"

namespace sib {

using nlohmann::json;
using nn::Graph;
using nn::Mat;
using nn::Parameter;
using nn::Var;

std::vector<ContextItem> resolve_context(const Corpus& corpus,
                                         const std::vector<const Interaction*>& context) {
    std::vector<ContextItem> items;
    items.reserve(context.size());
    for (const Interaction* ia : context) {
        ContextItem it;
        it.interaction = ia;
        if (ia->kind == Kind::Reply && ia->parent_id && corpus.by_id(*ia->parent_id))
            it.parent = &corpus.parent_of(*ia);
        items.push_back(it);
    }
    return items;
}

void ModelConfig::validate() const {
    body_encoder.validate();
    titletag_encoder.validate();
    context.validate();
    if (!use_body && !use_titletag)
        throw ValidationError("model: at least one of use_body/use_titletag must be enabled");
    if (use_lstm && !use_body) throw ValidationError("model: use_lstm requires use_body");
    if (lstm_hidden < 1 || attention_dim < 1 || fusion_hidden < 1)
        throw ValidationError("model: hidden sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must be in [0,1)");
    if (share_encoders) {
        const EncoderSpec &a = body_encoder, &b = titletag_encoder;
        if (a.vocab != b.vocab || a.layers != b.layers || a.heads != b.heads || a.dim != b.dim ||
            a.max_tokens != b.max_tokens)
            throw ValidationError("model: share_encoders requires identical encoder specs");
    }
}

namespace {

const Interaction* title_source(const ContextItem& item) {
    return item.is_post() ? item.interaction : item.parent;
}

}  // namespace

std::string build_titletag_string(const std::vector<ContextItem>& context, bool include_prefix) {
    std::string out;
    for (const ContextItem& item : context) {
        std::string entry;
        if (include_prefix) entry = item.is_post() ? "User posted:" : "User replied to:";
        const Interaction* src = title_source(item);
        const std::string title = src && src->title ? *src->title : "";
        if (!title.empty()) {
            if (!entry.empty()) entry += ' ';
            entry += title;
        }
        static const std::vector<std::string> kNoTags;
        const std::vector<std::string>& tags = src ? src->tags : kNoTags;
        if (!tags.empty()) {
            if (!entry.empty()) entry += ' ';
            entry += "[tags: ";
            for (size_t i = 0; i < tags.size(); ++i) {
                if (i) entry += ", ";
                entry += tags[i];
            }
            entry += ']';
        }
        if (entry.empty()) continue;
        if (!out.empty()) out += " | ";
        out += entry;
    }
    return out;
}

EarlySibModel::EarlySibModel(ModelConfig cfg)
    : cfg_(std::move(cfg)),
      body_tok_(cfg_.body_encoder.vocab),
      tt_tok_(cfg_.share_encoders ? cfg_.body_encoder.vocab : cfg_.titletag_encoder.vocab) {
    cfg_.validate();
    Rng rng = Rng(cfg_.seed).fork("init");
    body_enc_ = std::make_unique<TransformerEncoder>(cfg_.body_encoder, "body", rng);
    if (!cfg_.share_encoders)
        tt_enc_ = std::make_unique<TransformerEncoder>(cfg_.titletag_encoder, "titletag", rng);

    const int d = cfg_.body_encoder.dim;
    const int H = cfg_.lstm_hidden;
    auto mk = [&](const std::string& name, int rows, int cols, bool zero) {
        return std::make_unique<Parameter>(
            name, zero ? Mat::Zero(rows, cols) : nn::init_xavier(rng, rows, cols));
    };
    lstm_wx_f_ = mk("lstm.fwd.wx", d, 4 * H, false);
    lstm_wh_f_ = mk("lstm.fwd.wh", H, 4 * H, false);
    lstm_b_f_ = mk("lstm.fwd.b", 1, 4 * H, true);
    lstm_wx_b_ = mk("lstm.bwd.wx", d, 4 * H, false);
    lstm_wh_b_ = mk("lstm.bwd.wh", H, 4 * H, false);
    lstm_b_b_ = mk("lstm.bwd.b", 1, 4 * H, true);

    const int attn_in = cfg_.use_lstm ? 2 * H : d;
    attn_w_ = mk("attn.w", attn_in, cfg_.attention_dim, false);
    attn_v_ = mk("attn.v", cfg_.attention_dim, 1, false);

    const int body_out = cfg_.use_lstm ? 2 * H : d;
    const int tt_dim = cfg_.share_encoders ? d : cfg_.titletag_encoder.dim;
    const int fusion_in = (cfg_.use_body ? body_out : 0) + (cfg_.use_titletag ? tt_dim : 0);
    fuse_w1_ = mk("fuse.w1", fusion_in, cfg_.fusion_hidden, false);
    fuse_b1_ = mk("fuse.b1", 1, cfg_.fusion_hidden, true);
    fuse_w2_ = mk("fuse.w2", cfg_.fusion_hidden, 2, false);
    fuse_b2_ = mk("fuse.b2", 1, 2, true);
}

std::vector<Parameter*> EarlySibModel::params() {
    std::vector<Parameter*> out;
    if (cfg_.use_body)
        for (Parameter* p : body_enc_->params()) out.push_back(p);
    if (cfg_.use_titletag) {
        TransformerEncoder* enc = cfg_.share_encoders ? body_enc_.get() : tt_enc_.get();
        if (!cfg_.use_body || !cfg_.share_encoders)
            for (Parameter* p : enc->params()) out.push_back(p);
    }
    if (cfg_.use_body && cfg_.use_lstm)
        for (Parameter* p : {lstm_wx_f_.get(), lstm_wh_f_.get(), lstm_b_f_.get(),
                             lstm_wx_b_.get(), lstm_wh_b_.get(), lstm_b_b_.get()})
            out.push_back(p);
    if (cfg_.use_body)
        for (Parameter* p : {attn_w_.get(), attn_v_.get()}) out.push_back(p);
    for (Parameter* p : {fuse_w1_.get(), fuse_b1_.get(), fuse_w2_.get(), fuse_b2_.get()})
        out.push_back(p);
    return out;
}

long EarlySibModel::parameter_count() {
    long n = 0;
    for (Parameter* p : params()) n += static_cast<long>(p->value.size());
    return n;
}

std::vector<int> EarlySibModel::interaction_token_ids(const ContextItem& item) const {
    const Interaction& ia = *item.interaction;
    std::vector<int> ids;
    if (ia.is_post()) {
        ids = body_tok_.tokenize(ia.title ? *ia.title : "");
        ids.push_back(kSepId);
        for (int t : body_tok_.tokenize(ia.body)) ids.push_back(t);
    } else if (cfg_.context.replies_in_context) {
        // Parent title + reply body + parent body.
        const Interaction* parent = item.parent;
        ids = body_tok_.tokenize(parent && parent->title ? *parent->title : "");
        ids.push_back(kSepId);
        for (int t : body_tok_.tokenize(ia.body)) ids.push_back(t);
        ids.push_back(kSepId);
        for (int t : body_tok_.tokenize(parent ? parent->body : "")) ids.push_back(t);
    } else {
        ids = body_tok_.tokenize(ia.body);
    }
    return body_enc_->prepare_head(ids);
}

Eigen::RowVectorXd EarlySibModel::encode_interaction_vec(const ContextItem& item) const {
    Graph g;
    return body_enc_->encode_cls(g, interaction_token_ids(item), 0.0).val().row(0);
}

Var EarlySibModel::body_branch(Graph& g, const std::vector<Var>& vecs, int n_slots) const {
    const int d = cfg_.body_encoder.dim;
    const int H = cfg_.lstm_hidden;
    const int out_dim = cfg_.use_lstm ? 2 * H : d;
    const int valid = static_cast<int>(vecs.size());
    if (valid == 0) return g.zeros(1, out_dim);

    std::vector<Var> steps;
    if (cfg_.use_lstm) {
        auto lstm_step = [&](Var x, Var h, Var c, Parameter& wx, Parameter& wh, Parameter& b) {
            Var gates = g.add_rowvec(g.add(g.matmul(x, g.param(wx)), g.matmul(h, g.param(wh))),
                                     g.param(b));
            Var i = g.sigmoid(g.block(gates, 0, 0, 1, H));
            Var f = g.sigmoid(g.block(gates, 0, H, 1, H));
            Var gg = g.tanh(g.block(gates, 0, 2 * H, 1, H));
            Var o = g.sigmoid(g.block(gates, 0, 3 * H, 1, H));
            Var c2 = g.add(g.hadamard(f, c), g.hadamard(i, gg));
            Var h2 = g.hadamard(o, g.tanh(c2));
            return std::make_pair(h2, c2);
        };
        // Masked BiLSTM over n_slots; slots past the valid prefix carry the
        // state through unchanged, so padding cannot leak into the output.
        std::vector<Var> fwd(valid), bwd(valid);
        Var h = g.zeros(1, H), c = g.zeros(1, H);
        for (int t = 0; t < n_slots; ++t) {
            if (t >= valid) continue;  // pad slot: state carries
            std::tie(h, c) = lstm_step(vecs[t], h, c, *lstm_wx_f_, *lstm_wh_f_, *lstm_b_f_);
            fwd[t] = h;
        }
        h = g.zeros(1, H);
        c = g.zeros(1, H);
        for (int t = n_slots - 1; t >= 0; --t) {
            if (t >= valid) continue;
            std::tie(h, c) = lstm_step(vecs[t], h, c, *lstm_wx_b_, *lstm_wh_b_, *lstm_b_b_);
            bwd[t] = h;
        }
        for (int t = 0; t < valid; ++t) steps.push_back(g.concat_cols(fwd[t], bwd[t]));
    } else {
        steps = vecs;
    }

    Var states = steps.size() == 1 ? steps[0] : g.concat_rows(steps);  // valid x out_dim
    Var scores = g.matmul(g.tanh(g.matmul(states, g.param(*attn_w_))), g.param(*attn_v_));
    Var weights = g.softmax_rows(g.transpose(scores));  // 1 x valid
    Var weighted = g.matmul(weights, states);
    if (cfg_.attention_weighted_sum) return weighted;
    return g.scale(weighted, 1.0 / static_cast<double>(valid));
}

Var EarlySibModel::fuse(Graph& g, std::optional<Var> body, std::optional<Var> titletag) const {
    Var x;
    if (body && titletag)
        x = g.concat_cols(*body, *titletag);
    else
        x = body ? *body : *titletag;
    Var h = g.tanh(g.add_rowvec(g.matmul(x, g.param(*fuse_w1_)), g.param(*fuse_b1_)));
    return g.add_rowvec(g.matmul(h, g.param(*fuse_w2_)), g.param(*fuse_b2_));
}

Var EarlySibModel::build_logits(Graph& g, const std::vector<ContextItem>& items,
                                int n_slots) const {
    if (static_cast<int>(items.size()) > cfg_.context.N)
        throw ValidationError("forward: context exceeds N=" + std::to_string(cfg_.context.N));
    if (n_slots < 0) n_slots = static_cast<int>(items.size());
    if (n_slots < static_cast<int>(items.size()))
        throw ValidationError("forward: n_slots smaller than the context");

    std::optional<Var> body, titletag;
    if (cfg_.use_body) {
        std::vector<Var> vecs;
        vecs.reserve(items.size());
        for (const ContextItem& item : items)
            vecs.push_back(body_enc_->encode_cls(g, interaction_token_ids(item), cfg_.dropout));
        body = g.dropout(body_branch(g, vecs, n_slots), cfg_.dropout);
    }
    if (cfg_.use_titletag) {
        const TransformerEncoder& enc = cfg_.share_encoders ? *body_enc_ : *tt_enc_;
        const std::string text = build_titletag_string(items, cfg_.context.include_prefix);
        const std::vector<int> ids = enc.prepare_tail(tt_tok_.tokenize(text));
        titletag = g.dropout(enc.encode_cls(g, ids, cfg_.dropout), cfg_.dropout);
    }
    return fuse(g, body, titletag);
}

ForwardResult EarlySibModel::forward(const std::vector<ContextItem>& items, int n_slots) const {
    Graph g;
    Var logits = build_logits(g, items, n_slots);
    ForwardResult r;
    r.logits = logits.val().row(0);
    Eigen::RowVectorXd p = nn::softmax_row(r.logits);
    r.probability_sib = p(1);
    return r;
}

std::vector<EncodedItem> EarlySibModel::encode_items(const std::vector<ContextItem>& items) const {
    std::vector<EncodedItem> out;
    out.reserve(items.size());
    for (const ContextItem& item : items) {
        EncodedItem e;
        e.item = item;
        if (cfg_.use_body) e.body_vec = encode_interaction_vec(item);
        out.push_back(std::move(e));
    }
    return out;
}

ForwardResult EarlySibModel::forward_encoded(const std::vector<const EncodedItem*>& subset) const {
    Graph g;
    std::optional<Var> body, titletag;
    std::vector<ContextItem> items;
    items.reserve(subset.size());
    for (const EncodedItem* e : subset) items.push_back(e->item);
    if (cfg_.use_body) {
        std::vector<Var> vecs;
        vecs.reserve(subset.size());
        for (const EncodedItem* e : subset) vecs.push_back(g.constant(e->body_vec));
        body = body_branch(g, vecs, static_cast<int>(subset.size()));
    }
    if (cfg_.use_titletag) {
        const TransformerEncoder& enc = cfg_.share_encoders ? *body_enc_ : *tt_enc_;
        const std::string text = build_titletag_string(items, cfg_.context.include_prefix);
        titletag = enc.encode_cls(g, enc.prepare_tail(tt_tok_.tokenize(text)), 0.0);
    }
    Var logits = fuse(g, body, titletag);
    ForwardResult r;
    r.logits = logits.val().row(0);
    r.probability_sib = nn::softmax_row(r.logits)(1);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ValidationError("checkpoint: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

float get_f32(std::istream& in) {
    uint32_t v = get_u32(in);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

constexpr char kMagic[] = "SIBCKPT1";

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& config_json, const std::vector<Parameter*>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out.write(kMagic, 8);
    put_u32(out, static_cast<uint32_t>(kind.size()));
    out.write(kind.data(), static_cast<std::streamsize>(kind.size()));
    put_u32(out, static_cast<uint32_t>(config_json.size()));
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (const Parameter* p : params) {
        put_u32(out, static_cast<uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(out, static_cast<uint32_t>(p->value.rows()));
        put_u32(out, static_cast<uint32_t>(p->value.cols()));
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
            for (Eigen::Index c = 0; c < p->value.cols(); ++c)
                put_f32(out, static_cast<float>(p->value(r, c)));
    }
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError("checkpoint '" + path + "' has an unknown format");
    auto get_string = [&](uint32_t len) {
        std::string s(len, '\0');
        in.read(s.data(), len);
        if (!in) throw ValidationError("checkpoint: truncated file");
        return s;
    };
    CheckpointData ckpt;
    ckpt.kind = get_string(get_u32(in));
    ckpt.config_json = get_string(get_u32(in));
    const uint32_t n = get_u32(in);
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = get_string(get_u32(in));
        const uint32_t rows = get_u32(in), cols = get_u32(in);
        Mat m(rows, cols);
        for (uint32_t r = 0; r < rows; ++r)
            for (uint32_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(get_f32(in));
        ckpt.tensors.emplace_back(std::move(name), std::move(m));
    }
    return ckpt;
}

void load_into_params(const CheckpointData& ckpt, const std::vector<Parameter*>& params) {
    if (ckpt.tensors.size() != params.size())
        throw ValidationError("checkpoint: tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, m] = ckpt.tensors[i];
        if (name != params[i]->name)
            throw ValidationError("checkpoint: tensor '" + name + "' does not match parameter '" +
                                  params[i]->name + "'");
        if (m.rows() != params[i]->value.rows() || m.cols() != params[i]->value.cols())
            throw ValidationError("checkpoint: tensor '" + name + "' has wrong shape");
        params[i]->value = m;
    }
}

std::string model_config_to_json(const ModelConfig& cfg) {
    auto enc = [](const EncoderSpec& e) {
        return json{{"vocab", e.vocab},           {"layers", e.layers},
                    {"heads", e.heads},           {"dim", e.dim},
                    {"max_tokens", e.max_tokens}, {"trainable", e.trainable}};
    };
    json j{{"body_encoder", enc(cfg.body_encoder)},
           {"titletag_encoder", enc(cfg.titletag_encoder)},
           {"share_encoders", cfg.share_encoders},
           {"lstm_hidden", cfg.lstm_hidden},
           {"attention_dim", cfg.attention_dim},
           {"fusion_hidden", cfg.fusion_hidden},
           {"use_body", cfg.use_body},
           {"use_titletag", cfg.use_titletag},
           {"use_lstm", cfg.use_lstm},
           {"attention_weighted_sum", cfg.attention_weighted_sum},
           {"context",
            {{"N", cfg.context.N},
             {"prioritize_posts", cfg.context.prioritize_posts},
             {"replies_in_context", cfg.context.replies_in_context},
             {"include_prefix", cfg.context.include_prefix}}},
           {"dropout", cfg.dropout},
           {"seed", cfg.seed}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j = json::parse(text);
    auto enc = [](const json& e) {
        EncoderSpec s;
        s.vocab = e.at("vocab").get<int>();
        s.layers = e.at("layers").get<int>();
        s.heads = e.at("heads").get<int>();
        s.dim = e.at("dim").get<int>();
        s.max_tokens = e.at("max_tokens").get<int>();
        s.trainable = e.at("trainable").get<bool>();
        return s;
    };
    ModelConfig cfg;
    cfg.body_encoder = enc(j.at("body_encoder"));
    cfg.titletag_encoder = enc(j.at("titletag_encoder"));
    cfg.share_encoders = j.at("share_encoders").get<bool>();
    cfg.lstm_hidden = j.at("lstm_hidden").get<int>();
    cfg.attention_dim = j.at("attention_dim").get<int>();
    cfg.fusion_hidden = j.at("fusion_hidden").get<int>();
    cfg.use_body = j.at("use_body").get<bool>();
    cfg.use_titletag = j.at("use_titletag").get<bool>();
    cfg.use_lstm = j.at("use_lstm").get<bool>();
    cfg.attention_weighted_sum = j.at("attention_weighted_sum").get<bool>();
    cfg.context.N = j.at("context").at("N").get<int>();
    cfg.context.prioritize_posts = j.at("context").at("prioritize_posts").get<bool>();
    cfg.context.replies_in_context = j.at("context").at("replies_in_context").get<bool>();
    cfg.context.include_prefix = j.at("context").at("include_prefix").get<bool>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
}

void EarlySibModel::save(const std::string& path) const {
    save_checkpoint(path, "earlysib", model_config_to_json(cfg_),
                    const_cast<EarlySibModel*>(this)->params());
}

EarlySibModel EarlySibModel::load(const std::string& path) {
    CheckpointData ckpt = load_checkpoint(path);
    if (ckpt.kind != "earlysib")
        throw ValidationError("checkpoint '" + path + "' is not an earlysib model");
    EarlySibModel model(model_config_from_json(ckpt.config_json));
    load_into_params(ckpt, model.params());
    return model;
}

}  // namespace sib
