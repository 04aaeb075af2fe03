#include "compfreeze/compacter.hpp"

#include <stdexcept>

#include "compfreeze/rng.hpp"

namespace compfreeze {

void CompacterConfig::validate() const {
    if (hidden_dim == 0 || reduction_factor == 0) throw std::invalid_argument("CompacterConfig: zero dimension");
    if (hidden_dim % reduction_factor != 0)
        throw std::invalid_argument("CompacterConfig: reduction_factor must divide hidden_dim");
    if (phm.n == 0 || hidden_dim % phm.n != 0 || bottleneck() % phm.n != 0)
        throw std::invalid_argument("CompacterConfig: phm n must divide hidden_dim and bottleneck");
    down_spec().validate();
    up_spec().validate();
}

PhmSpec CompacterConfig::down_spec() const {
    PhmSpec s = phm;
    s.in_dim = hidden_dim;
    s.out_dim = bottleneck();
    return s;
}

PhmSpec CompacterConfig::up_spec() const {
    PhmSpec s = phm;
    s.in_dim = bottleneck();
    s.out_dim = hidden_dim;
    return s;
}

SharedFactorRegistry::SharedFactorRegistry(std::uint64_t seed, std::string prefix)
    : rng_(substream(seed, prefix)), prefix_(std::move(prefix)) {}

const std::vector<ParamPtr>& SharedFactorRegistry::get(std::size_t n, double init_range) {
    auto it = by_n_.find(n);
    if (it == by_n_.end()) {
        it = by_n_.emplace(n, make_shared_a(n, init_range, rng_, prefix_)).first;
    }
    return it->second;
}

std::vector<ParamPtr> SharedFactorRegistry::all() const {
    std::vector<ParamPtr> out;
    for (const auto& [n, ps] : by_n_) out.insert(out.end(), ps.begin(), ps.end());
    return out;
}

std::vector<ParamPtr> CompacterBlock::owned_parameters() const {
    auto out = down.owned();
    auto u = up.owned();
    out.insert(out.end(), u.begin(), u.end());
    return out;
}

CompacterBlock init_block(const CompacterConfig& config, SharedFactorRegistry& registry, std::mt19937_64& rng,
                          const std::string& prefix) {
    config.validate();
    CompacterBlock b;
    b.config = config;
    b.down_spec = config.down_spec();
    b.up_spec = config.up_spec();
    const auto& shared = registry.get(config.phm.n, config.phm.init_range);
    b.down = make_factors(b.down_spec, shared, rng, prefix + ".down", 1e-2, 1e-2);
    b.up = make_factors(b.up_spec, shared, rng, prefix + ".up", 1e-2, 0.0);
    return b;
}

Matrix block_forward(const Matrix& x, const CompacterBlock& block, BlockCache* cache) {
    if (x.cols != block.config.hidden_dim) {
        throw std::invalid_argument("block_forward: input width " + std::to_string(x.cols) + " != hidden " +
                                    std::to_string(block.config.hidden_dim));
    }
    Matrix pre = phm_forward(x, block.down_spec, block.down);
    Matrix act = apply(block.config.nonlinearity, pre);
    Matrix y = phm_forward(act, block.up_spec, block.up);
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] = x.values[i] + y.values[i];
    if (cache) {
        cache->x = x;
        cache->pre = std::move(pre);
        cache->act = std::move(act);
    }
    return y;
}

Matrix block_backward(const Matrix& dy, const CompacterBlock& block, const BlockCache& cache) {
    const Matrix dact = phm_backward(cache.act, dy, block.up_spec, block.up);
    const Matrix dpre = apply_grad(block.config.nonlinearity, cache.pre, dact);
    Matrix dx = phm_backward(cache.x, dpre, block.down_spec, block.down);
    for (std::size_t i = 0; i < dx.values.size(); ++i) dx.values[i] += dy.values[i];
    return dx;
}

std::size_t block_param_count(const CompacterConfig& config, bool count_shared_a) {
    const auto down = phm_param_count(config.down_spec(), count_shared_a);
    const auto up = phm_param_count(config.up_spec(), false);
    return down.total() + up.total();
}

}  // namespace compfreeze

namespace compfreeze {

nlohmann::json CompacterConfig::to_json() const {
    return {{"hidden_dim", hidden_dim},
            {"reduction_factor", reduction_factor},
            {"phm_n", phm.n},
            {"phm_rank", phm.rank},
            {"init_range", phm.init_range},
            {"nonlinearity", nonlinearity == Nonlinearity::gelu ? "gelu" : "relu"},
            {"placement", placement == Placement::after_ffn_only ? "after_ffn_only" : "two_per_block"},
            {"a_sharing", a_sharing == ASharing::global ? "global" : "per_block"}};
}

CompacterConfig CompacterConfig::from_json(const nlohmann::json& j) {
    CompacterConfig c;
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.reduction_factor = j.value("reduction_factor", c.reduction_factor);
    c.phm.n = j.value("phm_n", c.phm.n);
    c.phm.rank = j.value("phm_rank", c.phm.rank);
    c.phm.init_range = j.value("init_range", c.phm.init_range);
    const std::string nl = j.value("nonlinearity", "gelu");
    const std::string pl = j.value("placement", "after_ffn_only");
    const std::string sh = j.value("a_sharing", "per_block");
    if (nl != "gelu" && nl != "relu") throw std::invalid_argument("unknown nonlinearity '" + nl + "'");
    if (pl != "after_ffn_only" && pl != "two_per_block") throw std::invalid_argument("unknown placement '" + pl + "'");
    if (sh != "global" && sh != "per_block") throw std::invalid_argument("unknown a_sharing '" + sh + "'");
    c.nonlinearity = nl == "gelu" ? Nonlinearity::gelu : Nonlinearity::relu;
    c.placement = pl == "after_ffn_only" ? Placement::after_ffn_only : Placement::two_per_block;
    c.a_sharing = sh == "global" ? ASharing::global : ASharing::per_block;
    return c;
}

}  // namespace compfreeze
