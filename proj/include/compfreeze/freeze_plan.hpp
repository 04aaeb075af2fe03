#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace compfreeze {

enum class Strategy { odd_lc, even_lc, upper_lc, lower_lc, single, triple, full_finetune };

/// Which encoder layers (1-based) receive compacters.
struct PlacementPlan {
    Strategy strategy = Strategy::full_finetune;
    std::set<int> layers;
    int num_layers = 12;

    std::string name() const;
    bool has_compacters() const { return !layers.empty(); }
};

PlacementPlan plan_for_strategy(Strategy strategy, int num_layers = 12);
PlacementPlan plan_single(int layer, int num_layers = 12);
/// `group` is 1-based: 1 -> (1,2,3), 2 -> (4,5,6), ...
PlacementPlan plan_triple(int group, int num_layers = 12);

/// Accepts odd_lc, even_lc, upper_lc, lower_lc, full_finetune, single(i) and
/// triple(a,b,c). Throws std::invalid_argument otherwise.
PlacementPlan parse_plan(const std::string& text, int num_layers = 12);

enum class ParamKind { embedding, attention, ffn, layer_norm, pooler, compacter, compacter_shared, head };

const char* to_string(ParamKind kind);

struct ParamEntry {
    std::string path;
    std::size_t count = 0;
    ParamKind kind = ParamKind::attention;
    int layer = 0;  // 1-based encoder layer, 0 when not layer-scoped
};

struct ModelDescriptor {
    int num_layers = 12;
    std::vector<ParamEntry> entries;

    std::size_t total() const;
};

struct TrainableMask {
    std::map<std::string, bool> flags;
    std::size_t trainable_count = 0;
    std::size_t total_count = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_kind;  // kind -> (trainable, total)

    double fraction() const { return total_count ? double(trainable_count) / double(total_count) : 0.0; }
    bool is_trainable(const std::string& path) const;
    nlohmann::json summary() const;
};

TrainableMask build_trainable_mask(const ModelDescriptor& model, const PlacementPlan& plan);

}  // namespace compfreeze
