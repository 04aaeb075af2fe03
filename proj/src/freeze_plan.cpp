#include "compfreeze/freeze_plan.hpp"

#include <regex>
#include <stdexcept>

namespace compfreeze {

std::string PlacementPlan::name() const {
    switch (strategy) {
        case Strategy::odd_lc: return "odd_lc";
        case Strategy::even_lc: return "even_lc";
        case Strategy::upper_lc: return "upper_lc";
        case Strategy::lower_lc: return "lower_lc";
        case Strategy::full_finetune: return "full_finetune";
        case Strategy::single: return "single(" + std::to_string(*layers.begin()) + ")";
        case Strategy::triple: {
            std::string s = "triple(";
            for (int l : layers) s += std::to_string(l) + (l == *layers.rbegin() ? ")" : ",");
            return s;
        }
    }
    return "unknown";
}

PlacementPlan plan_for_strategy(Strategy strategy, int num_layers) {
    if (num_layers <= 0) throw std::invalid_argument("plan_for_strategy: num_layers must be positive");
    PlacementPlan p;
    p.strategy = strategy;
    p.num_layers = num_layers;
    switch (strategy) {
        case Strategy::odd_lc:
            for (int l = 1; l <= num_layers; l += 2) p.layers.insert(l);
            break;
        case Strategy::even_lc:
            for (int l = 2; l <= num_layers; l += 2) p.layers.insert(l);
            break;
        case Strategy::upper_lc:
        case Strategy::lower_lc: {
            if (num_layers % 2 != 0) throw std::invalid_argument("upper/lower halves need an even layer count");
            const int half = num_layers / 2;
            const int first = strategy == Strategy::lower_lc ? 1 : half + 1;
            for (int l = first; l < first + half; ++l) p.layers.insert(l);
            break;
        }
        case Strategy::full_finetune: break;
        case Strategy::single:
        case Strategy::triple:
            throw std::invalid_argument("plan_for_strategy: single/triple need a layer argument");
    }
    return p;
}

PlacementPlan plan_single(int layer, int num_layers) {
    if (layer < 1 || layer > num_layers) {
        throw std::invalid_argument("single(" + std::to_string(layer) + "): layer outside 1.." +
                                    std::to_string(num_layers));
    }
    return PlacementPlan{Strategy::single, {layer}, num_layers};
}

PlacementPlan plan_triple(int group, int num_layers) {
    const int first = 3 * (group - 1) + 1;
    if (group < 1 || first + 2 > num_layers) {
        throw std::invalid_argument("triple group " + std::to_string(group) + " outside model depth");
    }
    return PlacementPlan{Strategy::triple, {first, first + 1, first + 2}, num_layers};
}

PlacementPlan parse_plan(const std::string& text, int num_layers) {
    if (text == "odd_lc") return plan_for_strategy(Strategy::odd_lc, num_layers);
    if (text == "even_lc") return plan_for_strategy(Strategy::even_lc, num_layers);
    if (text == "upper_lc") return plan_for_strategy(Strategy::upper_lc, num_layers);
    if (text == "lower_lc") return plan_for_strategy(Strategy::lower_lc, num_layers);
    if (text == "full_finetune" || text == "full") return plan_for_strategy(Strategy::full_finetune, num_layers);
    std::smatch m;
    static const std::regex single_re(R"(single\((\d+)\))");
    static const std::regex triple_re(R"(triple\((\d+),\s*(\d+),\s*(\d+)\))");
    if (std::regex_match(text, m, single_re)) return plan_single(std::stoi(m[1]), num_layers);
    if (std::regex_match(text, m, triple_re)) {
        const int a = std::stoi(m[1]), b = std::stoi(m[2]), c = std::stoi(m[3]);
        if (b != a + 1 || c != a + 2 || (a - 1) % 3 != 0) {
            throw std::invalid_argument("triple groups are (1,2,3), (4,5,6), ...: got " + text);
        }
        return plan_triple((a - 1) / 3 + 1, num_layers);
    }
    throw std::invalid_argument("unknown strategy '" + text + "'");
}

const char* to_string(ParamKind kind) {
    switch (kind) {
        case ParamKind::embedding: return "embedding";
        case ParamKind::attention: return "attention";
        case ParamKind::ffn: return "ffn";
        case ParamKind::layer_norm: return "layer_norm";
        case ParamKind::pooler: return "pooler";
        case ParamKind::compacter: return "compacter";
        case ParamKind::compacter_shared: return "compacter_shared";
        case ParamKind::head: return "head";
    }
    return "unknown";
}

std::size_t ModelDescriptor::total() const {
    std::size_t t = 0;
    for (const auto& e : entries) t += e.count;
    return t;
}

bool TrainableMask::is_trainable(const std::string& path) const {
    auto it = flags.find(path);
    if (it == flags.end()) throw std::invalid_argument("TrainableMask: unknown parameter " + path);
    return it->second;
}

nlohmann::json TrainableMask::summary() const {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [kind, counts] : per_kind) {
        groups[kind] = {{"trainable", counts.first}, {"total", counts.second}};
    }
    return {{"trainable", trainable_count}, {"total", total_count}, {"trainable_fraction", fraction()},
            {"groups", groups}};
}

TrainableMask build_trainable_mask(const ModelDescriptor& model, const PlacementPlan& plan) {
    for (int l : plan.layers) {
        if (l < 1 || l > model.num_layers) {
            throw std::invalid_argument("plan layer " + std::to_string(l) + " outside model depth " +
                                        std::to_string(model.num_layers));
        }
    }
    const bool full = plan.strategy == Strategy::full_finetune;
    TrainableMask mask;
    for (const auto& e : model.entries) {
        bool trainable = full;
        switch (e.kind) {
            case ParamKind::compacter:
                if (!plan.layers.contains(e.layer)) {
                    throw std::invalid_argument("compacter parameter " + e.path + " sits outside the plan");
                }
                trainable = true;
                break;
            case ParamKind::compacter_shared:
            case ParamKind::layer_norm:
            case ParamKind::head: trainable = true; break;
            default: break;
        }
        if (!mask.flags.emplace(e.path, trainable).second) {
            throw std::invalid_argument("duplicate parameter path " + e.path);
        }
        auto& g = mask.per_kind[to_string(e.kind)];
        g.second += e.count;
        mask.total_count += e.count;
        if (trainable) {
            g.first += e.count;
            mask.trainable_count += e.count;
        }
    }
    return mask;
}

}  // namespace compfreeze
