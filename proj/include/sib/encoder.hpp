#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sib/graph.hpp"
#include "sib/tokenizer.hpp"

namespace sib {

// Small trainable BERT-style encoder. Stands in for the pretrained
// transformers; anything exposing a CLS vector can be dropped in behind
// the same interface.
struct EncoderSpec {
    int vocab = 8192;
    int layers = 2;
    int heads = 4;
    int dim = 128;
    int max_tokens = 128;
    bool trainable = true;

    void validate() const;
};

class TransformerEncoder {
public:
    TransformerEncoder(EncoderSpec spec, const std::string& prefix, Rng& init_rng);

    const EncoderSpec& spec() const { return spec_; }

    // ids must start with CLS and be pre-truncated to max_tokens.
    // Returns the CLS-position row (1 x dim).
    nn::Var encode_cls(nn::Graph& g, const std::vector<int>& ids, double dropout) const;

    // Prepends CLS and keeps the leading tokens up to max_tokens.
    std::vector<int> prepare_head(const std::vector<int>& word_ids) const;
    // Prepends CLS and keeps the trailing tokens up to max_tokens.
    std::vector<int> prepare_tail(const std::vector<int>& word_ids) const;

    std::vector<nn::Parameter*> params();

private:
    struct Layer {
        std::unique_ptr<nn::Parameter> wq, bq, wk, bk, wv, bv, wo, bo;
        std::unique_ptr<nn::Parameter> ln1_g, ln1_b;
        std::unique_ptr<nn::Parameter> w1, b1, w2, b2;
        std::unique_ptr<nn::Parameter> ln2_g, ln2_b;
    };

    EncoderSpec spec_;
    std::unique_ptr<nn::Parameter> tok_emb_;  // (vocab + reserved) x dim
    std::unique_ptr<nn::Parameter> pos_emb_;  // max_tokens x dim
    std::vector<Layer> layers_;
};

}  // namespace sib
