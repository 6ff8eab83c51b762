#include "sib/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "sib/optim.hpp"

namespace sib {

using nn::Graph;
using nn::Mat;
using nn::Parameter;
using nn::Var;

void EncoderSpec::validate() const {
    if (vocab < 1) throw std::invalid_argument("encoder vocab must be positive");
    if (dim % heads != 0) throw std::invalid_argument("encoder dim must be divisible by heads");
    if (max_tokens < 2) throw std::invalid_argument("encoder max_tokens must be >= 2");
    if (layers < 1) throw std::invalid_argument("encoder needs at least one layer");
}

TransformerEncoder::TransformerEncoder(EncoderSpec spec, const std::string& prefix, Rng& init_rng)
    : spec_(spec) {
    spec_.validate();
    const int d = spec_.dim;
    auto mk = [&](const std::string& name, int rows, int cols, bool zero) {
        auto p = std::make_unique<Parameter>(prefix + "." + name,
                                             zero ? Mat::Zero(rows, cols)
                                                  : nn::init_xavier(init_rng, rows, cols));
        p->trainable = spec_.trainable;
        return p;
    };
    auto mk_emb = [&](const std::string& name, int rows, int cols) {
        auto p = std::make_unique<Parameter>(prefix + "." + name,
                                             nn::init_normal(init_rng, rows, cols, 0.1));
        p->trainable = spec_.trainable;
        return p;
    };
    Tokenizer tok(spec_.vocab);
    tok_emb_ = mk_emb("tok_emb", tok.table_size(), d);
    pos_emb_ = mk_emb("pos_emb", spec_.max_tokens, d);
    layers_.resize(spec_.layers);
    for (int l = 0; l < spec_.layers; ++l) {
        const std::string lp = "layer" + std::to_string(l);
        Layer& L = layers_[l];
        L.wq = mk(lp + ".wq", d, d, false);
        L.bq = mk(lp + ".bq", 1, d, true);
        L.wk = mk(lp + ".wk", d, d, false);
        L.bk = mk(lp + ".bk", 1, d, true);
        L.wv = mk(lp + ".wv", d, d, false);
        L.bv = mk(lp + ".bv", 1, d, true);
        L.wo = mk(lp + ".wo", d, d, false);
        L.bo = mk(lp + ".bo", 1, d, true);
        L.ln1_g = mk(lp + ".ln1_g", 1, d, false);
        L.ln1_g->value.setOnes();
        L.ln1_b = mk(lp + ".ln1_b", 1, d, true);
        L.w1 = mk(lp + ".w1", d, 4 * d, false);
        L.b1 = mk(lp + ".b1", 1, 4 * d, true);
        L.w2 = mk(lp + ".w2", 4 * d, d, false);
        L.b2 = mk(lp + ".b2", 1, d, true);
        L.ln2_g = mk(lp + ".ln2_g", 1, d, false);
        L.ln2_g->value.setOnes();
        L.ln2_b = mk(lp + ".ln2_b", 1, d, true);
    }
}

std::vector<int> TransformerEncoder::prepare_head(const std::vector<int>& word_ids) const {
    std::vector<int> out{kClsId};
    const size_t keep = std::min(word_ids.size(), static_cast<size_t>(spec_.max_tokens - 1));
    out.insert(out.end(), word_ids.begin(), word_ids.begin() + static_cast<long>(keep));
    return out;
}

std::vector<int> TransformerEncoder::prepare_tail(const std::vector<int>& word_ids) const {
    std::vector<int> out{kClsId};
    const size_t keep = std::min(word_ids.size(), static_cast<size_t>(spec_.max_tokens - 1));
    out.insert(out.end(), word_ids.end() - static_cast<long>(keep), word_ids.end());
    return out;
}

Var TransformerEncoder::encode_cls(Graph& g, const std::vector<int>& ids, double dropout) const {
    if (ids.empty() || ids[0] != kClsId)
        throw std::logic_error("encode_cls expects a CLS-prefixed id sequence");
    if (static_cast<int>(ids.size()) > spec_.max_tokens)
        throw std::logic_error("encode_cls sequence exceeds max_tokens");
    const int T = static_cast<int>(ids.size());
    const int d = spec_.dim;
    const int dh = d / spec_.heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<int> pos(T);
    for (int t = 0; t < T; ++t) pos[t] = t;
    Var x = g.add(g.lookup(*tok_emb_, ids), g.lookup(*pos_emb_, pos));
    x = g.dropout(x, dropout);

    for (const Layer& L : layers_) {
        Var q = g.add_rowvec(g.matmul(x, g.param(*L.wq)), g.param(*L.bq));
        Var k = g.add_rowvec(g.matmul(x, g.param(*L.wk)), g.param(*L.bk));
        Var v = g.add_rowvec(g.matmul(x, g.param(*L.wv)), g.param(*L.bv));
        Var heads_out;
        for (int h = 0; h < spec_.heads; ++h) {
            Var qh = g.block(q, 0, h * dh, T, dh);
            Var kh = g.block(k, 0, h * dh, T, dh);
            Var vh = g.block(v, 0, h * dh, T, dh);
            Var scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_dh);
            Var attn = g.softmax_rows(scores);
            Var oh = g.matmul(attn, vh);
            heads_out = (h == 0) ? oh : g.concat_cols(heads_out, oh);
        }
        Var o = g.add_rowvec(g.matmul(heads_out, g.param(*L.wo)), g.param(*L.bo));
        o = g.dropout(o, dropout);
        x = g.layernorm_rows(g.add(x, o), g.param(*L.ln1_g), g.param(*L.ln1_b));
        Var f = g.gelu(g.add_rowvec(g.matmul(x, g.param(*L.w1)), g.param(*L.b1)));
        f = g.add_rowvec(g.matmul(f, g.param(*L.w2)), g.param(*L.b2));
        f = g.dropout(f, dropout);
        x = g.layernorm_rows(g.add(x, f), g.param(*L.ln2_g), g.param(*L.ln2_b));
    }
    return g.block(x, 0, 0, 1, d);
}

std::vector<Parameter*> TransformerEncoder::params() {
    std::vector<Parameter*> out{tok_emb_.get(), pos_emb_.get()};
    for (Layer& L : layers_) {
        for (Parameter* p : {L.wq.get(), L.bq.get(), L.wk.get(), L.bk.get(), L.wv.get(),
                             L.bv.get(), L.wo.get(), L.bo.get(), L.ln1_g.get(), L.ln1_b.get(),
                             L.w1.get(), L.b1.get(), L.w2.get(), L.b2.get(), L.ln2_g.get(),
                             L.ln2_b.get()})
            out.push_back(p);
    }
    return out;
}

}  // namespace sib
