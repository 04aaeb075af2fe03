#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "compfreeze/encoder.hpp"

namespace compfreeze {

struct TrainConfig {
    double learning_rate = 5e-5;
    int epochs = 3;
    std::size_t batch_size = 8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
    std::size_t max_seq_len = 128;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Sequence tasks carry one label per example; token tasks one per token,
/// with negative labels ignored by the loss and the metrics.
struct EncodedExample {
    TokenIds ids;
    std::vector<int> labels;
};

struct EncodedDataset {
    TaskKind kind = TaskKind::sequence_classification;
    std::size_t num_labels = 2;
    std::vector<EncodedExample> examples;

    bool empty() const { return examples.empty(); }
    std::size_t size() const { return examples.size(); }
};

struct MetricsReport {
    double f1 = 0.0;
    double accuracy = 0.0;
    double trainable_fraction = 0.0;
    double wall_time_seconds = 0.0;
    std::optional<double> relative_time_vs_full;
    std::vector<double> epoch_loss;
    std::size_t steps = 0;

    nlohmann::json to_json() const;
};

/// Decoupled-weight-decay Adam. Decay is skipped for biases and layer norms.
class AdamW {
public:
    explicit AdamW(const TrainConfig& cfg);
    void step(const std::vector<ParamPtr>& params);
    std::size_t steps() const { return t_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::map<const Parameter*, Moments> state_;
};

struct Prediction {
    std::vector<int> labels;       // one per example, or one per token
    std::vector<Matrix> logits;    // 1 x L per example, or tokens x L
};

/// Mean cross-entropy of a batch and its logit gradient. Returns the number of
/// labelled rows used.
std::size_t cross_entropy(const Matrix& logits, const std::vector<int>& targets, double& loss, Matrix& dlogits);

MetricsReport train(AdaptedModel& model, const EncodedDataset& data, const TrainConfig& cfg);

std::vector<Prediction> predict(const AdaptedModel& model, const EncodedDataset& data, std::size_t batch_size = 32);

/// Binary F1 of `positive_label` for sequence tasks; weighted F1 for token tasks.
MetricsReport evaluate(const AdaptedModel& model, const EncodedDataset& data, int positive_label = 1);

/// Signed fraction, e.g. -0.25 means 25% faster than full fine-tuning.
double relative_time(double run_seconds, double full_seconds);

struct GridPoint {
    double learning_rate = 0.0;
    int epochs = 0;
    MetricsReport train_report;
    MetricsReport test_report;
};

struct GridResult {
    GridPoint best;
    std::vector<GridPoint> table;
    nlohmann::json to_json() const;
};

using ModelFactory = std::function<AdaptedModel()>;

/// Best test F1 wins; ties go to the lowest learning rate, then fewest epochs.
GridResult grid_search(const ModelFactory& factory, const EncodedDataset& train_set, const EncodedDataset& test_set,
                       const std::vector<double>& lr_grid, const std::vector<int>& epoch_grid, TrainConfig base,
                       int positive_label = 1);

}  // namespace compfreeze
