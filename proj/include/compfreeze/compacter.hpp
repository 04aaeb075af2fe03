#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "compfreeze/activations.hpp"
#include "compfreeze/kron.hpp"

namespace compfreeze {

enum class Placement { after_ffn_only, two_per_block };

/// Scope over which the A_i factors are shared.
enum class ASharing {
    global,     // one set for every compacter in the model
    per_block,  // one set per down/up pair
};

struct CompacterConfig {
    std::size_t hidden_dim = 768;
    std::size_t reduction_factor = 16;
    PhmSpec phm{.n = 4, .in_dim = 0, .out_dim = 0, .rank = 1, .init_range = 1e-4};
    Nonlinearity nonlinearity = Nonlinearity::gelu;
    Placement placement = Placement::after_ffn_only;
    ASharing a_sharing = ASharing::per_block;

    std::size_t bottleneck() const { return hidden_dim / reduction_factor; }
    void validate() const;
    PhmSpec down_spec() const;
    PhmSpec up_spec() const;

    nlohmann::json to_json() const;
    static CompacterConfig from_json(const nlohmann::json& j);
};

/// Owns shared A_i tensors, created lazily on first use for a given n.
class SharedFactorRegistry {
public:
    SharedFactorRegistry(std::uint64_t seed, std::string prefix = "compacter.shared");

    const std::vector<ParamPtr>& get(std::size_t n, double init_range);
    std::vector<ParamPtr> all() const;

private:
    std::mt19937_64 rng_;
    std::string prefix_;
    std::map<std::size_t, std::vector<ParamPtr>> by_n_;
};

/// Residual bottleneck adapter: y = x + up(f(down(x))).
struct CompacterBlock {
    CompacterConfig config;
    PhmSpec down_spec;
    PhmSpec up_spec;
    FactorSet down;
    FactorSet up;

    std::vector<ParamPtr> owned_parameters() const;
};

struct BlockCache {
    Matrix x;
    Matrix pre;  // down(x)
    Matrix act;  // f(down(x))
};

/// Builds a block whose down/up factors bind the registry's A_i. The up
/// projection starts at exactly zero so the block is the identity.
CompacterBlock init_block(const CompacterConfig& config, SharedFactorRegistry& registry, std::mt19937_64& rng,
                          const std::string& prefix);

Matrix block_forward(const Matrix& x, const CompacterBlock& block, BlockCache* cache = nullptr);

/// Accumulates factor gradients and returns dL/dx.
Matrix block_backward(const Matrix& dy, const CompacterBlock& block, const BlockCache& cache);

/// Trainable entries of one block, shared A counted once.
std::size_t block_param_count(const CompacterConfig& config, bool count_shared_a);

}  // namespace compfreeze
