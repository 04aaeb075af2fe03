#include "compfreeze/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "compfreeze/kernels.hpp"
#include "compfreeze/rng.hpp"

namespace compfreeze {

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr int kUnkId = 1;

std::string layer_prefix(int l) { return "encoder.layer." + std::to_string(l); }

struct TensorSpec {
    std::string path;
    std::size_t rows = 0, cols = 0;
    ParamRole role = ParamRole::weight;
    ParamKind kind = ParamKind::attention;
    int layer = 0;
};

std::vector<TensorSpec> encoder_layout(const EncoderDescriptor& d, bool with_pooler) {
    const std::size_t h = d.hidden_dim, f = d.ffn_dim;
    std::vector<TensorSpec> out{
        {"embeddings.word", d.vocab_size, h, ParamRole::embedding, ParamKind::embedding, 0},
        {"embeddings.position", d.max_positions, h, ParamRole::embedding, ParamKind::embedding, 0},
        {"embeddings.token_type", d.type_vocab, h, ParamRole::embedding, ParamKind::embedding, 0},
        {"embeddings.layer_norm.gamma", 1, h, ParamRole::layer_norm, ParamKind::layer_norm, 0},
        {"embeddings.layer_norm.beta", 1, h, ParamRole::layer_norm, ParamKind::layer_norm, 0},
    };
    for (int l = 1; l <= d.num_layers; ++l) {
        const std::string p = layer_prefix(l);
        for (const char* name : {"query", "key", "value"}) {
            out.push_back({p + ".attention." + name + ".weight", h, h, ParamRole::weight, ParamKind::attention, l});
            out.push_back({p + ".attention." + name + ".bias", 1, h, ParamRole::bias, ParamKind::attention, l});
        }
        out.push_back({p + ".attention.output.weight", h, h, ParamRole::weight, ParamKind::attention, l});
        out.push_back({p + ".attention.output.bias", 1, h, ParamRole::bias, ParamKind::attention, l});
        out.push_back({p + ".attention.layer_norm.gamma", 1, h, ParamRole::layer_norm, ParamKind::layer_norm, l});
        out.push_back({p + ".attention.layer_norm.beta", 1, h, ParamRole::layer_norm, ParamKind::layer_norm, l});
        out.push_back({p + ".ffn.intermediate.weight", h, f, ParamRole::weight, ParamKind::ffn, l});
        out.push_back({p + ".ffn.intermediate.bias", 1, f, ParamRole::bias, ParamKind::ffn, l});
        out.push_back({p + ".ffn.output.weight", f, h, ParamRole::weight, ParamKind::ffn, l});
        out.push_back({p + ".ffn.output.bias", 1, h, ParamRole::bias, ParamKind::ffn, l});
        out.push_back({p + ".output.layer_norm.gamma", 1, h, ParamRole::layer_norm, ParamKind::layer_norm, l});
        out.push_back({p + ".output.layer_norm.beta", 1, h, ParamRole::layer_norm, ParamKind::layer_norm, l});
    }
    if (with_pooler) {
        out.push_back({"pooler.weight", h, h, ParamRole::weight, ParamKind::pooler, 0});
        out.push_back({"pooler.bias", 1, h, ParamRole::bias, ParamKind::pooler, 0});
    }
    return out;
}

bool head_has_dense(const EncoderDescriptor& d, const TaskHead& head) {
    return head.kind == TaskKind::sequence_classification && d.head_style == HeadStyle::dense_projection;
}

bool head_uses_pooler(const EncoderDescriptor& d, const TaskHead& head) {
    return head.kind == TaskKind::sequence_classification && d.head_style == HeadStyle::pooled_linear;
}

std::vector<TensorSpec> head_layout(const EncoderDescriptor& d, const TaskHead& head) {
    const std::size_t h = d.hidden_dim;
    std::vector<TensorSpec> out;
    if (head_has_dense(d, head)) {
        out.push_back({"head.dense.weight", h, h, ParamRole::weight, ParamKind::head, 0});
        out.push_back({"head.dense.bias", 1, h, ParamRole::bias, ParamKind::head, 0});
    }
    out.push_back({"head.out.weight", h, head.num_labels, ParamRole::weight, ParamKind::head, 0});
    out.push_back({"head.out.bias", 1, head.num_labels, ParamRole::bias, ParamKind::head, 0});
    return out;
}

std::vector<std::string> compacter_sites(const CompacterConfig& c) {
    if (c.placement == Placement::two_per_block) return {"attn", "ffn"};
    return {"ffn"};
}

std::string block_prefix(int l, const std::string& site) { return "compacter.layer." + std::to_string(l) + "." + site; }

const std::string kGlobalSharedPrefix = "compacter.shared";

void append_phm_layout(std::vector<TensorSpec>& out, const std::string& prefix, const PhmSpec& s, int layer) {
    for (std::size_t i = 0; i < s.n; ++i)
        out.push_back({prefix + ".s." + std::to_string(i), s.in_block(), s.rank, ParamRole::weight, ParamKind::compacter, layer});
    for (std::size_t i = 0; i < s.n; ++i)
        out.push_back({prefix + ".t." + std::to_string(i), s.rank, s.out_block(), ParamRole::weight, ParamKind::compacter, layer});
    out.push_back({prefix + ".bias", 1, s.out_dim, ParamRole::bias, ParamKind::compacter, layer});
}

std::vector<TensorSpec> compacter_layout(const PlacementPlan& plan, const CompacterConfig& c) {
    std::vector<TensorSpec> out;
    if (!plan.has_compacters()) return out;
    const std::size_t n = c.phm.n;
    for (int l : plan.layers) {
        for (const auto& site : compacter_sites(c)) {
            const std::string prefix = block_prefix(l, site);
            if (c.a_sharing == ASharing::per_block) {
                for (std::size_t i = 0; i < n; ++i)
                    out.push_back({prefix + ".A." + std::to_string(i), n, n, ParamRole::weight, ParamKind::compacter, l});
            }
            append_phm_layout(out, prefix + ".down", c.down_spec(), l);
            append_phm_layout(out, prefix + ".up", c.up_spec(), l);
        }
    }
    if (c.a_sharing == ASharing::global) {
        for (std::size_t i = 0; i < n; ++i)
            out.push_back({kGlobalSharedPrefix + ".A." + std::to_string(i), n, n, ParamRole::weight,
                           ParamKind::compacter_shared, 0});
    }
    return out;
}

ParamEntry to_entry(const TensorSpec& t) { return {t.path, t.rows * t.cols, t.kind, t.layer}; }

}  // namespace

// ---------------------------------------------------------------------------
// descriptors

void EncoderDescriptor::validate() const {
    if (num_layers <= 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0 || vocab_size < 3 || max_positions == 0 ||
        type_vocab == 0) {
        throw std::invalid_argument("EncoderDescriptor: all sizes must be positive (vocab >= 3)");
    }
    if (hidden_dim % num_heads != 0) throw std::invalid_argument("EncoderDescriptor: num_heads must divide hidden_dim");
}

EncoderDescriptor EncoderDescriptor::bert_base() { return {}; }

EncoderDescriptor EncoderDescriptor::roberta_base() {
    EncoderDescriptor d;
    d.vocab_size = 50265;
    d.max_positions = 514;
    d.type_vocab = 1;
    d.head_style = HeadStyle::dense_projection;
    return d;
}

EncoderDescriptor EncoderDescriptor::toy(std::size_t hidden_dim, std::size_t vocab_size, std::size_t max_positions,
                                         HeadStyle style) {
    EncoderDescriptor d;
    d.hidden_dim = hidden_dim;
    d.num_heads = hidden_dim >= 64 ? 4 : 2;
    d.ffn_dim = 4 * hidden_dim;
    d.vocab_size = vocab_size;
    d.max_positions = max_positions;
    d.type_vocab = 1;
    d.head_style = style;
    return d;
}

nlohmann::json EncoderDescriptor::to_json() const {
    return {{"num_layers", num_layers},       {"hidden_dim", hidden_dim}, {"num_heads", num_heads},
            {"ffn_dim", ffn_dim},             {"vocab_size", vocab_size}, {"max_positions", max_positions},
            {"type_vocab", type_vocab},
            {"head_style", head_style == HeadStyle::pooled_linear ? "pooled_linear" : "dense_projection"}};
}

EncoderDescriptor EncoderDescriptor::from_json(const nlohmann::json& j) {
    EncoderDescriptor d;
    d.num_layers = j.at("num_layers");
    d.hidden_dim = j.at("hidden_dim");
    d.num_heads = j.at("num_heads");
    d.ffn_dim = j.at("ffn_dim");
    d.vocab_size = j.at("vocab_size");
    d.max_positions = j.at("max_positions");
    d.type_vocab = j.at("type_vocab");
    const std::string style = j.at("head_style");
    if (style == "pooled_linear") d.head_style = HeadStyle::pooled_linear;
    else if (style == "dense_projection") d.head_style = HeadStyle::dense_projection;
    else throw std::invalid_argument("unknown head_style " + style);
    d.validate();
    return d;
}

ModelDescriptor describe_model(const EncoderDescriptor& encoder, const TaskHead& head, const PlacementPlan& plan,
                               const CompacterConfig& compacter) {
    encoder.validate();
    if (plan.has_compacters()) compacter.validate();
    ModelDescriptor m;
    m.num_layers = encoder.num_layers;
    for (const auto& t : encoder_layout(encoder, head_uses_pooler(encoder, head))) m.entries.push_back(to_entry(t));
    for (const auto& t : compacter_layout(plan, compacter)) m.entries.push_back(to_entry(t));
    for (const auto& t : head_layout(encoder, head)) m.entries.push_back(to_entry(t));
    return m;
}

// ---------------------------------------------------------------------------
// weights

std::vector<ParamPtr> EncoderLayerParams::all() const {
    return {query_w,       query_b,       key_w,    key_b,    value_w,   value_b,   attn_out_w,   attn_out_b,
            attn_ln_gamma, attn_ln_beta,  ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b, out_ln_gamma, out_ln_beta};
}

Encoder::Encoder(EncoderDescriptor d) : desc(std::move(d)) {
    desc.validate();
    std::map<std::string, ParamPtr> by_path;
    for (const auto& t : encoder_layout(desc, desc.head_style == HeadStyle::pooled_linear)) {
        auto p = make_param(t.path, t.rows, t.cols, t.role);
        if (t.path.ends_with("layer_norm.gamma")) p->value.fill(1.0);
        by_path.emplace(t.path, std::move(p));
    }
    word = by_path.at("embeddings.word");
    position = by_path.at("embeddings.position");
    token_type = by_path.at("embeddings.token_type");
    emb_ln_gamma = by_path.at("embeddings.layer_norm.gamma");
    emb_ln_beta = by_path.at("embeddings.layer_norm.beta");
    for (int l = 1; l <= desc.num_layers; ++l) {
        const std::string p = layer_prefix(l);
        EncoderLayerParams lp;
        lp.query_w = by_path.at(p + ".attention.query.weight");
        lp.query_b = by_path.at(p + ".attention.query.bias");
        lp.key_w = by_path.at(p + ".attention.key.weight");
        lp.key_b = by_path.at(p + ".attention.key.bias");
        lp.value_w = by_path.at(p + ".attention.value.weight");
        lp.value_b = by_path.at(p + ".attention.value.bias");
        lp.attn_out_w = by_path.at(p + ".attention.output.weight");
        lp.attn_out_b = by_path.at(p + ".attention.output.bias");
        lp.attn_ln_gamma = by_path.at(p + ".attention.layer_norm.gamma");
        lp.attn_ln_beta = by_path.at(p + ".attention.layer_norm.beta");
        lp.ffn_in_w = by_path.at(p + ".ffn.intermediate.weight");
        lp.ffn_in_b = by_path.at(p + ".ffn.intermediate.bias");
        lp.ffn_out_w = by_path.at(p + ".ffn.output.weight");
        lp.ffn_out_b = by_path.at(p + ".ffn.output.bias");
        lp.out_ln_gamma = by_path.at(p + ".output.layer_norm.gamma");
        lp.out_ln_beta = by_path.at(p + ".output.layer_norm.beta");
        layers.push_back(std::move(lp));
    }
    if (desc.head_style == HeadStyle::pooled_linear) {
        pooler_w = by_path.at("pooler.weight");
        pooler_b = by_path.at("pooler.bias");
    }
}

std::shared_ptr<Encoder> Encoder::random(const EncoderDescriptor& d, std::uint64_t seed, double init_std) {
    auto enc = std::make_shared<Encoder>(d);
    auto rng = substream(seed, "encoder");
    std::normal_distribution<double> dist(0.0, init_std);
    for (const auto& p : enc->parameters()) {
        if (p->role == ParamRole::weight || p->role == ParamRole::embedding) {
            for (double& v : p->value.values) v = dist(rng);
        }
    }
    return enc;
}

std::shared_ptr<Encoder> Encoder::clone() const {
    auto copy = std::make_shared<Encoder>(desc);
    const auto src = parameters();
    const auto dst = copy->parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i]->value = src[i]->value;
        dst[i]->trainable = src[i]->trainable;
    }
    return copy;
}

std::vector<ParamPtr> Encoder::parameters() const {
    std::vector<ParamPtr> out{word, position, token_type, emb_ln_gamma, emb_ln_beta};
    for (const auto& l : layers) {
        auto a = l.all();
        out.insert(out.end(), a.begin(), a.end());
    }
    if (pooler_w) {
        out.push_back(pooler_w);
        out.push_back(pooler_b);
    }
    return out;
}

std::uint64_t Encoder::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : parameters()) {
        h = fnv1a64(p->path, h);
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p->value.values.data()),
                                     p->value.values.size() * sizeof(double)),
                    h);
    }
    return h;
}

std::vector<ParamPtr> HeadParams::all() const {
    std::vector<ParamPtr> out;
    if (dense_w) {
        out.push_back(dense_w);
        out.push_back(dense_b);
    }
    out.push_back(out_w);
    out.push_back(out_b);
    return out;
}

// ---------------------------------------------------------------------------
// adapted model

bool AdaptedModel::uses_pooler() const { return head_uses_pooler(encoder->desc, head); }

std::vector<ParamPtr> AdaptedModel::parameters() const {
    std::vector<ParamPtr> out = encoder->parameters();
    if (!uses_pooler() && encoder->pooler_w) out.resize(out.size() - 2);
    for (int l : plan.layers) {
        for (const auto* blocks : {&attn_blocks, &ffn_blocks}) {
            auto it = blocks->find(l);
            if (it == blocks->end()) continue;
            const auto& b = it->second;
            if (compacter_config.a_sharing == ASharing::per_block)
                out.insert(out.end(), b.down.shared_a.begin(), b.down.shared_a.end());
            auto owned = b.owned_parameters();
            out.insert(out.end(), owned.begin(), owned.end());
        }
    }
    out.insert(out.end(), shared_a.begin(), shared_a.end());
    auto h = head_params.all();
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

ModelDescriptor AdaptedModel::descriptor() const {
    // kinds come from the analytic layout; counts come from the live tensors
    const ModelDescriptor layout = describe_model(encoder->desc, head, plan, compacter_config);
    const auto params = parameters();
    if (params.size() != layout.entries.size()) {
        throw std::logic_error("AdaptedModel: parameter list diverges from layout");
    }
    ModelDescriptor m = layout;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->path != layout.entries[i].path) {
            throw std::logic_error("AdaptedModel: parameter " + params[i]->path + " out of layout order");
        }
        m.entries[i].count = params[i]->count();
    }
    return m;
}

void AdaptedModel::apply_mask() {
    for (const auto& p : parameters()) p->trainable = mask.is_trainable(p->path);
}

AdaptedModel insert_compacters(std::shared_ptr<Encoder> encoder, const TaskHead& head, const PlacementPlan& plan,
                               const CompacterConfig& config, std::uint64_t seed) {
    if (!encoder) throw std::invalid_argument("insert_compacters: null encoder");
    const auto& d = encoder->desc;
    if (plan.num_layers != d.num_layers) {
        throw std::invalid_argument("insert_compacters: plan depth " + std::to_string(plan.num_layers) +
                                    " != encoder depth " + std::to_string(d.num_layers));
    }
    if (head.num_labels == 0) throw std::invalid_argument("insert_compacters: head needs at least one label");
    if (plan.has_compacters()) {
        if (config.hidden_dim != d.hidden_dim) {
            throw std::invalid_argument("insert_compacters: compacter hidden_dim " + std::to_string(config.hidden_dim) +
                                        " != encoder hidden " + std::to_string(d.hidden_dim));
        }
        config.validate();
    }
    AdaptedModel m;
    m.base_hash = encoder->hash();
    m.seed = seed;
    m.encoder = std::move(encoder);
    m.head = head;
    m.plan = plan;
    m.compacter_config = config;

    if (plan.has_compacters()) {
        auto rng = substream(seed, "compacter");
        SharedFactorRegistry global(seed, kGlobalSharedPrefix);
        for (int l : plan.layers) {
            if (l < 1 || l > d.num_layers) throw std::invalid_argument("insert_compacters: layer outside depth");
            for (const auto& site : compacter_sites(config)) {
                const std::string prefix = block_prefix(l, site);
                SharedFactorRegistry local(seed, prefix);
                auto& registry = config.a_sharing == ASharing::global ? global : local;
                auto block = init_block(config, registry, rng, prefix);
                (site == "attn" ? m.attn_blocks : m.ffn_blocks).emplace(l, std::move(block));
            }
        }
        if (config.a_sharing == ASharing::global) m.shared_a = global.all();
    }

    auto rng = substream(seed, "head");
    std::normal_distribution<double> dist(0.0, 0.02);
    for (const auto& t : head_layout(d, head)) {
        auto p = make_param(t.path, t.rows, t.cols, t.role);
        if (t.role == ParamRole::weight) {
            for (double& v : p->value.values) v = dist(rng);
        }
        if (t.path == "head.dense.weight") m.head_params.dense_w = p;
        else if (t.path == "head.dense.bias") m.head_params.dense_b = p;
        else if (t.path == "head.out.weight") m.head_params.out_w = p;
        else m.head_params.out_b = p;
    }

    m.mask = build_trainable_mask(m.descriptor(), plan);
    m.apply_mask();
    return m;
}

// ---------------------------------------------------------------------------
// forward / backward

namespace {

struct LnCache {
    Matrix xhat;
    std::vector<double> rstd;
};

Matrix ln_forward(const Matrix& x, const Parameter& gamma, const Parameter& beta, LnCache* cache) {
    Matrix y(x.rows, x.cols);
    if (cache) {
        cache->xhat = Matrix(x.rows, x.cols);
        cache->rstd.assign(x.rows, 0.0);
    }
    const std::size_t h = x.cols;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xr = x.values.data() + i * h;
        double mean = 0.0;
        for (std::size_t j = 0; j < h; ++j) mean += xr[j];
        mean /= double(h);
        double var = 0.0;
        for (std::size_t j = 0; j < h; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= double(h);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        double* yr = y.values.data() + i * h;
        for (std::size_t j = 0; j < h; ++j) {
            const double xh = (xr[j] - mean) * rstd;
            yr[j] = xh * gamma.value.values[j] + beta.value.values[j];
            if (cache) cache->xhat.values[i * h + j] = xh;
        }
        if (cache) cache->rstd[i] = rstd;
    }
    return y;
}

Matrix ln_backward(const Matrix& dy, Parameter& gamma, Parameter& beta, const LnCache& c) {
    const std::size_t h = dy.cols;
    Matrix dx(dy.rows, h);
    std::vector<double> dxhat(h);
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dyr = dy.values.data() + i * h;
        const double* xh = c.xhat.values.data() + i * h;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
            dxhat[j] = dyr[j] * gamma.value.values[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
        }
        m1 /= double(h);
        m2 /= double(h);
        double* dxr = dx.values.data() + i * h;
        for (std::size_t j = 0; j < h; ++j) dxr[j] = c.rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
        if (gamma.trainable)
            for (std::size_t j = 0; j < h; ++j) gamma.grad.values[j] += dyr[j] * xh[j];
        if (beta.trainable)
            for (std::size_t j = 0; j < h; ++j) beta.grad.values[j] += dyr[j];
    }
    return dx;
}

Matrix linear(const Matrix& x, const Parameter& w, const Parameter& b) {
    Matrix y;
    kernels::gemm(x, w.value, y);
    kernels::add_row_bias(y, b.value);
    return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& dy, Parameter& w, Parameter& b, bool need_dx = true) {
    if (w.trainable) kernels::gemm_tn(x, dy, w.grad, true);
    if (b.trainable) kernels::accumulate_column_sums(dy, b.grad);
    Matrix dx;
    if (need_dx) kernels::gemm_nt(dy, w.value, dx);
    return dx;
}

void add_into(Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] += b.values[i];
}

}  // namespace

struct LayerCache {
    Matrix x, q, k, v, ctx, attn_out;
    std::vector<double> probs;  // per (sequence, head): L x L, row-major, concatenated
    BlockCache attn_block;
    LnCache ln1;
    Matrix h1, f1, g, f2;
    BlockCache ffn_block;
    LnCache ln2;
};

struct ForwardState {
    std::vector<std::size_t> offsets;
    std::vector<int> ids;
    std::vector<int> positions;
    LnCache emb_ln;
    std::vector<LayerCache> layers;
    Matrix hidden;
    Matrix cls, head_pre, head_act;
};

namespace {

void attention_forward(const AdaptedModel& m, const std::vector<std::size_t>& offsets, LayerCache& c, bool keep) {
    const auto& d = m.encoder->desc;
    const std::size_t h = d.hidden_dim, heads = d.num_heads, dh = h / heads;
    const double scale = 1.0 / std::sqrt(double(dh));
    c.ctx = Matrix(c.q.rows, h);
    if (keep) c.probs.clear();
    std::vector<double> p;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const std::size_t off = offsets[s], len = offsets[s + 1] - offsets[s];
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const std::size_t col = hd * dh;
            p.assign(len * len, 0.0);
            for (std::size_t i = 0; i < len; ++i) {
                const double* qi = c.q.values.data() + (off + i) * h + col;
                double mx = -INFINITY;
                for (std::size_t j = 0; j < len; ++j) {
                    const double* kj = c.k.values.data() + (off + j) * h + col;
                    double sc = 0.0;
                    for (std::size_t e = 0; e < dh; ++e) sc += qi[e] * kj[e];
                    sc *= scale;
                    p[i * len + j] = sc;
                    mx = std::max(mx, sc);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    p[i * len + j] = std::exp(p[i * len + j] - mx);
                    z += p[i * len + j];
                }
                double* out = c.ctx.values.data() + (off + i) * h + col;
                for (std::size_t j = 0; j < len; ++j) {
                    p[i * len + j] /= z;
                    const double* vj = c.v.values.data() + (off + j) * h + col;
                    for (std::size_t e = 0; e < dh; ++e) out[e] += p[i * len + j] * vj[e];
                }
            }
            if (keep) c.probs.insert(c.probs.end(), p.begin(), p.end());
        }
    }
}

// returns (dq, dk, dv) packed in three matrices
void attention_backward(const AdaptedModel& m, const std::vector<std::size_t>& offsets, const LayerCache& c,
                        const Matrix& dctx, Matrix& dq, Matrix& dk, Matrix& dv) {
    const auto& d = m.encoder->desc;
    const std::size_t h = d.hidden_dim, heads = d.num_heads, dh = h / heads;
    const double scale = 1.0 / std::sqrt(double(dh));
    dq = Matrix(c.q.rows, h);
    dk = Matrix(c.q.rows, h);
    dv = Matrix(c.q.rows, h);
    std::size_t pofs = 0;
    std::vector<double> dp;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const std::size_t off = offsets[s], len = offsets[s + 1] - offsets[s];
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const std::size_t col = hd * dh;
            const double* p = c.probs.data() + pofs;
            pofs += len * len;
            dp.assign(len * len, 0.0);
            for (std::size_t i = 0; i < len; ++i) {
                const double* dci = dctx.values.data() + (off + i) * h + col;
                for (std::size_t j = 0; j < len; ++j) {
                    const double* vj = c.v.values.data() + (off + j) * h + col;
                    double* dvj = dv.values.data() + (off + j) * h + col;
                    double acc = 0.0;
                    const double pij = p[i * len + j];
                    for (std::size_t e = 0; e < dh; ++e) {
                        acc += dci[e] * vj[e];
                        dvj[e] += pij * dci[e];
                    }
                    dp[i * len + j] = acc;
                }
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += p[i * len + j] * dp[i * len + j];
                const double* qi = c.q.values.data() + (off + i) * h + col;
                double* dqi = dq.values.data() + (off + i) * h + col;
                for (std::size_t j = 0; j < len; ++j) {
                    const double ds = p[i * len + j] * (dp[i * len + j] - dot) * scale;
                    if (ds == 0.0) continue;
                    const double* kj = c.k.values.data() + (off + j) * h + col;
                    double* dkj = dk.values.data() + (off + j) * h + col;
                    for (std::size_t e = 0; e < dh; ++e) {
                        dqi[e] += ds * kj[e];
                        dkj[e] += ds * qi[e];
                    }
                }
            }
        }
    }
}

std::shared_ptr<ForwardState> run_forward(const AdaptedModel& m, const std::vector<TokenIds>& batch, bool keep) {
    const auto& enc = *m.encoder;
    const auto& d = enc.desc;
    const std::size_t h = d.hidden_dim;
    auto st = std::make_shared<ForwardState>();
    st->offsets.push_back(0);
    for (const auto& seq : batch) {
        const std::size_t len = std::min(seq.size(), d.max_positions);
        if (len == 0) throw std::invalid_argument("forward: empty sequence");
        for (std::size_t p = 0; p < len; ++p) {
            const int id = seq[p];
            st->ids.push_back(id >= 0 && std::size_t(id) < d.vocab_size ? id : kUnkId);
            st->positions.push_back(int(p));
        }
        st->offsets.push_back(st->offsets.back() + len);
    }
    const std::size_t total = st->ids.size();

    Matrix emb(total, h);
    for (std::size_t t = 0; t < total; ++t) {
        const double* w = enc.word->value.values.data() + std::size_t(st->ids[t]) * h;
        const double* pe = enc.position->value.values.data() + std::size_t(st->positions[t]) * h;
        const double* te = enc.token_type->value.values.data();
        double* e = emb.values.data() + t * h;
        for (std::size_t j = 0; j < h; ++j) e[j] = w[j] + pe[j] + te[j];
    }
    Matrix x = ln_forward(emb, *enc.emb_ln_gamma, *enc.emb_ln_beta, keep ? &st->emb_ln : nullptr);

    st->layers.resize(keep ? enc.layers.size() : 1);
    for (std::size_t li = 0; li < enc.layers.size(); ++li) {
        const int layer_no = int(li) + 1;
        const auto& lp = enc.layers[li];
        LayerCache& c = st->layers[keep ? li : 0];
        c.q = linear(x, *lp.query_w, *lp.query_b);
        c.k = linear(x, *lp.key_w, *lp.key_b);
        c.v = linear(x, *lp.value_w, *lp.value_b);
        attention_forward(m, st->offsets, c, keep);
        Matrix a = linear(c.ctx, *lp.attn_out_w, *lp.attn_out_b);
        if (auto it = m.attn_blocks.find(layer_no); it != m.attn_blocks.end()) {
            if (keep) c.attn_out = a;
            a = block_forward(a, it->second, keep ? &c.attn_block : nullptr);
        }
        add_into(a, x);
        Matrix h1 = ln_forward(a, *lp.attn_ln_gamma, *lp.attn_ln_beta, keep ? &c.ln1 : nullptr);
        Matrix f1 = linear(h1, *lp.ffn_in_w, *lp.ffn_in_b);
        Matrix g = apply(Nonlinearity::gelu, f1);
        Matrix f2 = linear(g, *lp.ffn_out_w, *lp.ffn_out_b);
        if (auto it = m.ffn_blocks.find(layer_no); it != m.ffn_blocks.end()) {
            f2 = block_forward(f2, it->second, keep ? &c.ffn_block : nullptr);
        }
        add_into(f2, h1);
        Matrix out = ln_forward(f2, *lp.out_ln_gamma, *lp.out_ln_beta, keep ? &c.ln2 : nullptr);
        if (keep) {
            c.x = std::move(x);
            c.h1 = std::move(h1);
            c.f1 = std::move(f1);
            c.g = std::move(g);
        }
        x = std::move(out);
    }
    st->hidden = std::move(x);
    return st;
}

Matrix head_forward(const AdaptedModel& m, ForwardState& st) {
    const auto& hp = m.head_params;
    if (m.head.kind == TaskKind::token_classification) return linear(st.hidden, *hp.out_w, *hp.out_b);
    const std::size_t batch = st.offsets.size() - 1, h = st.hidden.cols;
    st.cls = Matrix(batch, h);
    for (std::size_t b = 0; b < batch; ++b) {
        auto src = st.hidden.row(st.offsets[b]);
        std::copy(src.begin(), src.end(), st.cls.row(b).begin());
    }
    const bool pooled = m.uses_pooler();
    st.head_pre = pooled ? linear(st.cls, *m.encoder->pooler_w, *m.encoder->pooler_b)
                         : linear(st.cls, *hp.dense_w, *hp.dense_b);
    st.head_act = st.head_pre;
    for (double& v : st.head_act.values) v = std::tanh(v);
    return linear(st.head_act, *hp.out_w, *hp.out_b);
}

}  // namespace

ForwardResult forward_train(const AdaptedModel& model, const std::vector<TokenIds>& batch) {
    ForwardResult r;
    r.state = run_forward(model, batch, true);
    r.offsets = r.state->offsets;
    if (batch.empty()) {
        r.logits = Matrix(0, model.head.num_labels);
        return r;
    }
    r.logits = head_forward(model, *r.state);
    return r;
}

Matrix forward_sequence(const AdaptedModel& model, const std::vector<TokenIds>& batch) {
    if (model.head.kind != TaskKind::sequence_classification)
        throw std::invalid_argument("forward_sequence: model has a token head");
    if (batch.empty()) return Matrix(0, model.head.num_labels);
    auto st = run_forward(model, batch, false);
    return head_forward(model, *st);
}

std::vector<Matrix> forward_tokens(const AdaptedModel& model, const std::vector<TokenIds>& batch) {
    if (model.head.kind != TaskKind::token_classification)
        throw std::invalid_argument("forward_tokens: model has a sequence head");
    std::vector<Matrix> out;
    if (batch.empty()) return out;
    auto st = run_forward(model, batch, false);
    const Matrix logits = head_forward(model, *st);
    const std::size_t labels = logits.cols;
    for (std::size_t b = 0; b + 1 < st->offsets.size(); ++b) {
        const std::size_t off = st->offsets[b], len = st->offsets[b + 1] - off;
        Matrix seq(len, labels);
        std::copy(logits.values.begin() + off * labels, logits.values.begin() + (off + len) * labels,
                  seq.values.begin());
        out.push_back(std::move(seq));
    }
    return out;
}

void backward(const AdaptedModel& m, const ForwardResult& fwd, const Matrix& dlogits) {
    auto& st = *fwd.state;
    const auto& enc = *m.encoder;
    const auto& hp = m.head_params;
    const std::size_t h = enc.desc.hidden_dim;
    if (st.offsets.size() <= 1) return;
    if (!dlogits.same_shape(fwd.logits)) throw std::invalid_argument("backward: dlogits shape mismatch");

    Matrix dx;
    if (m.head.kind == TaskKind::token_classification) {
        dx = linear_backward(st.hidden, dlogits, *hp.out_w, *hp.out_b);
    } else {
        Matrix dact = linear_backward(st.head_act, dlogits, *hp.out_w, *hp.out_b);
        for (std::size_t i = 0; i < dact.values.size(); ++i) {
            const double a = st.head_act.values[i];
            dact.values[i] *= 1.0 - a * a;
        }
        Matrix dcls = m.uses_pooler() ? linear_backward(st.cls, dact, *enc.pooler_w, *enc.pooler_b)
                                      : linear_backward(st.cls, dact, *hp.dense_w, *hp.dense_b);
        dx = Matrix(st.hidden.rows, h);
        for (std::size_t b = 0; b + 1 < st.offsets.size(); ++b) {
            auto src = dcls.row(b);
            std::copy(src.begin(), src.end(), dx.row(st.offsets[b]).begin());
        }
    }

    for (std::size_t li = enc.layers.size(); li-- > 0;) {
        const int layer_no = int(li) + 1;
        const auto& lp = enc.layers[li];
        const LayerCache& c = st.layers[li];
        Matrix dr2 = ln_backward(dx, *lp.out_ln_gamma, *lp.out_ln_beta, c.ln2);
        Matrix dh1 = dr2;
        Matrix df2 = std::move(dr2);
        if (auto it = m.ffn_blocks.find(layer_no); it != m.ffn_blocks.end()) {
            df2 = block_backward(df2, it->second, c.ffn_block);
        }
        Matrix dg = linear_backward(c.g, df2, *lp.ffn_out_w, *lp.ffn_out_b);
        Matrix df1 = apply_grad(Nonlinearity::gelu, c.f1, dg);
        add_into(dh1, linear_backward(c.h1, df1, *lp.ffn_in_w, *lp.ffn_in_b));
        Matrix dr1 = ln_backward(dh1, *lp.attn_ln_gamma, *lp.attn_ln_beta, c.ln1);
        Matrix dlayer_in = dr1;
        Matrix da = std::move(dr1);
        if (auto it = m.attn_blocks.find(layer_no); it != m.attn_blocks.end()) {
            da = block_backward(da, it->second, c.attn_block);
        }
        Matrix dctx = linear_backward(c.ctx, da, *lp.attn_out_w, *lp.attn_out_b);
        Matrix dq, dk, dv;
        attention_backward(m, st.offsets, c, dctx, dq, dk, dv);
        add_into(dlayer_in, linear_backward(c.x, dq, *lp.query_w, *lp.query_b));
        add_into(dlayer_in, linear_backward(c.x, dk, *lp.key_w, *lp.key_b));
        add_into(dlayer_in, linear_backward(c.x, dv, *lp.value_w, *lp.value_b));
        dx = std::move(dlayer_in);
    }

    Matrix demb = ln_backward(dx, *enc.emb_ln_gamma, *enc.emb_ln_beta, st.emb_ln);
    for (std::size_t t = 0; t < st.ids.size(); ++t) {
        const double* g = demb.values.data() + t * h;
        if (enc.word->trainable) {
            double* w = enc.word->grad.values.data() + std::size_t(st.ids[t]) * h;
            for (std::size_t j = 0; j < h; ++j) w[j] += g[j];
        }
        if (enc.position->trainable) {
            double* p = enc.position->grad.values.data() + std::size_t(st.positions[t]) * h;
            for (std::size_t j = 0; j < h; ++j) p[j] += g[j];
        }
        if (enc.token_type->trainable) {
            double* tt = enc.token_type->grad.values.data();
            for (std::size_t j = 0; j < h; ++j) tt[j] += g[j];
        }
    }
}

}  // namespace compfreeze
