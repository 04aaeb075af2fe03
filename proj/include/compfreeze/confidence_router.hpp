#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "compfreeze/encoder.hpp"
#include "compfreeze/llm_gateway.hpp"
#include "compfreeze/tensor.hpp"

namespace compfreeze {

enum class ConfidenceMeasure {
    max_prob,  // largest softmax probability
    margin,    // top-1 minus top-2 probability
    entropy,   // 1 - H(p) / log(K)
};

ConfidenceMeasure parse_measure(const std::string& name);

double confidence_sequence(std::span<const double> logits, ConfidenceMeasure measure = ConfidenceMeasure::max_prob);
/// Mean per-token confidence over rows whose padding flag is false.
double confidence_sentence(const Matrix& token_logits, const std::vector<bool>& padding,
                           ConfidenceMeasure measure = ConfidenceMeasure::max_prob);

struct RouterConfig {
    double threshold = 0.75;
    TaskKind task = TaskKind::sequence_classification;
    ConfidenceMeasure measure = ConfidenceMeasure::max_prob;
    std::size_t batch_size = 20;  // inputs per call for classification

    void validate() const;
    nlohmann::json to_json() const;
};

/// `predicted` and `gold` hold one label for sequence tasks, one tag per token otherwise.
struct LocalPrediction {
    std::size_t id = 0;
    std::string text;                 // sequence tasks
    std::vector<std::string> tokens;  // token tasks
    std::vector<std::string> predicted;
    double confidence = 1.0;
    std::vector<std::string> gold;  // empty when unknown
};

enum class FinalSource { local, llm, local_fallback };
const char* to_string(FinalSource s);

struct RoutingRecord {
    std::size_t id = 0;
    std::vector<std::string> local;
    double confidence = 0.0;
    bool routed = false;
    std::optional<std::vector<std::string>> llm;
    std::optional<std::string> explanation;  // raw LLM reply
    std::vector<std::string> final_labels;
    FinalSource source = FinalSource::local;
    std::string fallback_reason;

    nlohmann::json to_json() const;
};

struct RouteReport {
    std::vector<RoutingRecord> records;
    std::size_t routed = 0;
    std::size_t fallbacks = 0;
    std::optional<double> f1_before;
    std::optional<double> f1_after;

    nlohmann::json to_json(const std::string& task) const;
};

/// Inputs with confidence < threshold go to the LLM; unparseable or failed
/// replies fall back to the local prediction. F1 covers the whole set and is
/// binary on label_set[1] for sequences, weighted over tags otherwise.
RouteReport route_and_merge(const std::vector<LocalPrediction>& predictions, const RouterConfig& cfg,
                            const llm::LLMClient& client, const llm::PromptTemplate& tpl,
                            const std::vector<std::string>& label_set, const llm::EntityCatalog* catalog = nullptr);

void write_jsonl(std::ostream& out, const std::vector<RoutingRecord>& records);

/// Scores a trained model's predictions for routing.
std::vector<LocalPrediction> local_predictions(const AdaptedModel& model, const std::vector<TokenIds>& ids,
                                               const std::vector<std::string>& texts,
                                               const std::vector<std::vector<std::string>>& tokens,
                                               const std::vector<std::vector<std::string>>& gold,
                                               const std::vector<std::string>& label_set,
                                               ConfidenceMeasure measure = ConfidenceMeasure::max_prob);

}  // namespace compfreeze
