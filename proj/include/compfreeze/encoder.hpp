#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "compfreeze/compacter.hpp"
#include "compfreeze/freeze_plan.hpp"
#include "compfreeze/param.hpp"

namespace compfreeze {

enum class HeadStyle {
    pooled_linear,     // BERT: tanh pooler over the first token, then a linear classifier
    dense_projection,  // RoBERTa: dense + tanh + projection over the first token
};

enum class TaskKind { sequence_classification, token_classification };

struct EncoderDescriptor {
    int num_layers = 12;
    std::size_t hidden_dim = 768;
    std::size_t num_heads = 12;
    std::size_t ffn_dim = 3072;
    std::size_t vocab_size = 30522;
    std::size_t max_positions = 512;
    std::size_t type_vocab = 2;
    HeadStyle head_style = HeadStyle::pooled_linear;

    void validate() const;

    static EncoderDescriptor bert_base();
    static EncoderDescriptor roberta_base();
    static EncoderDescriptor toy(std::size_t hidden_dim, std::size_t vocab_size, std::size_t max_positions = 512,
                                 HeadStyle style = HeadStyle::pooled_linear);

    nlohmann::json to_json() const;
    static EncoderDescriptor from_json(const nlohmann::json& j);
};

struct TaskHead {
    TaskKind kind = TaskKind::sequence_classification;
    std::size_t num_labels = 2;
};

/// Analytic parameter listing of an adapted model, computed from shapes alone.
/// Lets full-size encoders be accounted for without allocating them.
ModelDescriptor describe_model(const EncoderDescriptor& encoder, const TaskHead& head, const PlacementPlan& plan,
                               const CompacterConfig& compacter);

struct EncoderLayerParams {
    ParamPtr query_w, query_b, key_w, key_b, value_w, value_b, attn_out_w, attn_out_b;
    ParamPtr attn_ln_gamma, attn_ln_beta;
    ParamPtr ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
    ParamPtr out_ln_gamma, out_ln_beta;

    std::vector<ParamPtr> all() const;
};

/// Post-LN transformer encoder weights.
class Encoder {
public:
    EncoderDescriptor desc;
    ParamPtr word, position, token_type, emb_ln_gamma, emb_ln_beta;
    std::vector<EncoderLayerParams> layers;
    ParamPtr pooler_w, pooler_b;  // pooled_linear only

    /// Allocates zeroed weights with unit layer-norm gains.
    explicit Encoder(EncoderDescriptor d);

    /// Deterministic random weights, N(0, init_std^2).
    static std::shared_ptr<Encoder> random(const EncoderDescriptor& d, std::uint64_t seed, double init_std = 0.02);

    std::shared_ptr<Encoder> clone() const;
    std::vector<ParamPtr> parameters() const;
    /// FNV-1a over paths and raw values.
    std::uint64_t hash() const;
};

struct HeadParams {
    ParamPtr dense_w, dense_b;  // dense_projection sequence heads only
    ParamPtr out_w, out_b;

    std::vector<ParamPtr> all() const;
};

/// Encoder + compacters + task head + mask.
struct AdaptedModel {
    std::shared_ptr<Encoder> encoder;
    TaskHead head;
    HeadParams head_params;
    PlacementPlan plan;
    CompacterConfig compacter_config;
    std::map<int, CompacterBlock> ffn_blocks;
    std::map<int, CompacterBlock> attn_blocks;  // two_per_block only
    std::vector<ParamPtr> shared_a;             // registry-owned factors, global sharing
    TrainableMask mask;
    std::uint64_t base_hash = 0;  // encoder hash at insertion time
    std::uint64_t seed = 0;

    bool uses_pooler() const;
    std::vector<ParamPtr> parameters() const;
    ModelDescriptor descriptor() const;
    /// Copies mask flags onto Parameter::trainable.
    void apply_mask();
};

/// Places a block after the feed-forward sublayer of each planned layer (and
/// after attention under two_per_block), builds the task head and the mask.
/// The encoder's tensors are referenced, not copied.
AdaptedModel insert_compacters(std::shared_ptr<Encoder> encoder, const TaskHead& head, const PlacementPlan& plan,
                               const CompacterConfig& config, std::uint64_t seed);

using TokenIds = std::vector<int>;

Matrix forward_sequence(const AdaptedModel& model, const std::vector<TokenIds>& batch);
std::vector<Matrix> forward_tokens(const AdaptedModel& model, const std::vector<TokenIds>& batch);

/// Cached activations of one forward pass, consumed by backward().
struct ForwardState;

struct ForwardResult {
    std::shared_ptr<ForwardState> state;
    Matrix logits;  // B x labels for sequences, (total tokens) x labels for tokens
    std::vector<std::size_t> offsets;  // token rows of sequence b: [offsets[b], offsets[b+1])
};

ForwardResult forward_train(const AdaptedModel& model, const std::vector<TokenIds>& batch);

/// Accumulates gradients of every trainable parameter given dL/dlogits.
void backward(const AdaptedModel& model, const ForwardResult& fwd, const Matrix& dlogits);

}  // namespace compfreeze
