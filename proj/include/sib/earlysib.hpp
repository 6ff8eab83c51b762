#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sib/corpus.hpp"
#include "sib/encoder.hpp"
#include "sib/graph.hpp"
#include "sib/userset.hpp"

namespace sib {

// A context slot: the interaction plus its resolved parent post (replies
// only; null for posts or when the parent is unavailable).
struct ContextItem {
    const Interaction* interaction = nullptr;
    const Interaction* parent = nullptr;

    bool is_post() const { return interaction->is_post(); }
};

std::vector<ContextItem> resolve_context(const Corpus& corpus,
                                         const std::vector<const Interaction*>& context);

struct ModelConfig {
    EncoderSpec body_encoder{.vocab = 8192, .layers = 2, .heads = 4, .dim = 128,
                             .max_tokens = 128};
    EncoderSpec titletag_encoder{.vocab = 8192, .layers = 2, .heads = 4, .dim = 128,
                                 .max_tokens = 512};
    bool share_encoders = false;
    int lstm_hidden = 128;     // per direction
    int attention_dim = 128;
    int fusion_hidden = 64;
    bool use_body = true;      // B
    bool use_titletag = true;  // T
    bool use_lstm = true;      // L
    // Alternative pooling reading: attention-weighted sum without the mean.
    bool attention_weighted_sum = false;
    ContextConfig context;
    double dropout = 0.1;
    uint64_t seed = 42;

    void validate() const;
};

// Prefixed titles and tags of the whole context joined into one string.
// For replies the parent post supplies title and tags. Entries that render
// empty are skipped.
std::string build_titletag_string(const std::vector<ContextItem>& context, bool include_prefix);

struct ForwardResult {
    Eigen::RowVector2d logits;
    double probability_sib = 0.0;
};

// Item with its pre-computed body-branch vector; lets the explainer reuse
// per-interaction encodings across coalition evaluations.
struct EncodedItem {
    ContextItem item;
    Eigen::RowVectorXd body_vec;
};

class EarlySibModel {
public:
    explicit EarlySibModel(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    std::vector<nn::Parameter*> params();

    // Builds the differentiable forward pass. n_slots >= |items| pads the
    // recurrent sequence; padding never changes the result.
    nn::Var build_logits(nn::Graph& g, const std::vector<ContextItem>& items,
                         int n_slots = -1) const;

    ForwardResult forward(const std::vector<ContextItem>& items, int n_slots = -1) const;

    // CLS vector of the body encoder for one interaction (inference).
    Eigen::RowVectorXd encode_interaction_vec(const ContextItem& item) const;

    std::vector<EncodedItem> encode_items(const std::vector<ContextItem>& items) const;
    // Same output as forward() on the matching sub-context.
    ForwardResult forward_encoded(const std::vector<const EncodedItem*>& subset) const;

    void save(const std::string& path) const;
    static EarlySibModel load(const std::string& path);

    long parameter_count();

private:
    nn::Var body_branch(nn::Graph& g, const std::vector<nn::Var>& vecs, int n_slots) const;
    nn::Var fuse(nn::Graph& g, std::optional<nn::Var> body, std::optional<nn::Var> titletag) const;
    std::vector<int> interaction_token_ids(const ContextItem& item) const;

    ModelConfig cfg_;
    Tokenizer body_tok_, tt_tok_;
    std::unique_ptr<TransformerEncoder> body_enc_;
    std::unique_ptr<TransformerEncoder> tt_enc_;  // null when sharing
    // BiLSTM (forward/backward direction), attention, fusion head.
    std::unique_ptr<nn::Parameter> lstm_wx_f_, lstm_wh_f_, lstm_b_f_;
    std::unique_ptr<nn::Parameter> lstm_wx_b_, lstm_wh_b_, lstm_b_b_;
    std::unique_ptr<nn::Parameter> attn_w_, attn_v_;
    std::unique_ptr<nn::Parameter> fuse_w1_, fuse_b1_, fuse_w2_, fuse_b2_;
};

// Single-file checkpoint container: magic+version, a JSON config blob, and a
// named manifest of little-endian float32 tensors.
void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& config_json,
                     const std::vector<nn::Parameter*>& params);
struct CheckpointData {
    std::string kind;
    std::string config_json;
    std::vector<std::pair<std::string, nn::Mat>> tensors;
};
CheckpointData load_checkpoint(const std::string& path);
void load_into_params(const CheckpointData& ckpt, const std::vector<nn::Parameter*>& params);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace sib
