#include "compfreeze/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "compfreeze/errors.hpp"
#include "compfreeze/metrics.hpp"
#include "compfreeze/rng.hpp"

namespace compfreeze {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (max_seq_len == 0) throw std::invalid_argument("TrainConfig: max_seq_len must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate}, {"epochs", epochs},         {"batch_size", batch_size},
            {"beta1", beta1},                 {"beta2", beta2},           {"epsilon", epsilon},
            {"weight_decay", weight_decay},   {"max_seq_len", max_seq_len}, {"seed", seed}};
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j = {{"f1", f1},
                        {"accuracy", accuracy},
                        {"trainable_fraction", trainable_fraction},
                        {"wall_time_seconds", wall_time_seconds},
                        {"epoch_loss", epoch_loss},
                        {"steps", steps}};
    j["relative_time_vs_full"] = relative_time_vs_full ? nlohmann::json(*relative_time_vs_full) : nlohmann::json();
    return j;
}

AdamW::AdamW(const TrainConfig& cfg) : cfg_(cfg) {}

void AdamW::step(const std::vector<ParamPtr>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = std::sqrt(1.0 - std::pow(cfg_.beta2, double(t_)));
    const double step_size = cfg_.learning_rate / bc1;
    for (const auto& p : params) {
        if (!p->trainable) continue;
        auto& w = p->value.values;
        const auto& g = p->grad.values;
        auto& mo = state_[p.get()];
        if (mo.m.empty()) {
            mo.m.assign(w.size(), 0.0);
            mo.v.assign(w.size(), 0.0);
        }
        const bool decay = cfg_.weight_decay > 0.0 && p->role != ParamRole::bias && p->role != ParamRole::layer_norm;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (decay) w[i] -= cfg_.learning_rate * cfg_.weight_decay * w[i];
            mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g[i];
            mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            w[i] -= step_size * mo.m[i] / (std::sqrt(mo.v[i]) / bc2 + cfg_.epsilon);
        }
    }
}

std::size_t cross_entropy(const Matrix& logits, const std::vector<int>& targets, double& loss, Matrix& dlogits) {
    if (targets.size() != logits.rows) throw std::invalid_argument("cross_entropy: target count mismatch");
    dlogits = Matrix(logits.rows, logits.cols);
    std::size_t used = 0;
    for (int t : targets) used += t >= 0;
    loss = 0.0;
    if (used == 0) return 0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const int t = targets[r];
        if (t < 0) continue;
        if (std::size_t(t) >= logits.cols) throw InvalidData("label " + std::to_string(t) + " outside vocabulary");
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double lz = std::log(z) + mx;
        loss += lz - row[t];
        for (std::size_t c = 0; c < logits.cols; ++c)
            dlogits(r, c) = (std::exp(row[c] - lz) - (int(c) == t ? 1.0 : 0.0)) / double(used);
    }
    loss /= double(used);
    return used;
}

namespace {

void check_labels(const EncodedDataset& data) {
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        const auto& ex = data.examples[i];
        if (ex.ids.empty()) throw InvalidData("example " + std::to_string(i) + " has no tokens");
        if (data.kind == TaskKind::sequence_classification && ex.labels.size() != 1)
            throw InvalidData("example " + std::to_string(i) + " needs exactly one label");
        if (data.kind == TaskKind::token_classification && ex.labels.size() != ex.ids.size())
            throw InvalidData("example " + std::to_string(i) + " has a label/token length mismatch");
        for (int l : ex.labels) {
            const bool ignored = l < 0 && data.kind == TaskKind::token_classification;
            if (!ignored && (l < 0 || std::size_t(l) >= data.num_labels))
                throw InvalidData("example " + std::to_string(i) + " has label " + std::to_string(l) +
                                  " outside vocabulary");
        }
    }
}

std::vector<TokenIds> batch_ids(const EncodedDataset& data, const std::vector<std::size_t>& idx) {
    std::vector<TokenIds> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(data.examples[i].ids);
    return out;
}

std::vector<int> batch_targets(const EncodedDataset& data, const std::vector<std::size_t>& idx,
                               const std::vector<std::size_t>& offsets) {
    std::vector<int> targets;
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto& labels = data.examples[idx[b]].labels;
        if (data.kind == TaskKind::sequence_classification) {
            targets.push_back(labels[0]);
        } else {
            const std::size_t len = offsets[b + 1] - offsets[b];
            targets.insert(targets.end(), labels.begin(), labels.begin() + std::ptrdiff_t(len));
        }
    }
    return targets;
}

int argmax_row(const Matrix& m, std::size_t r) {
    const auto row = m.row(r);
    return int(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

MetricsReport train(AdaptedModel& model, const EncodedDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    if (data.kind != model.head.kind) throw std::invalid_argument("train: dataset task kind differs from the head");
    if (data.num_labels != model.head.num_labels)
        throw std::invalid_argument("train: dataset label count differs from the head");
    check_labels(data);
    model.apply_mask();

    EncodedDataset clipped = data;
    for (auto& ex : clipped.examples) {
        if (ex.ids.size() > cfg.max_seq_len) {
            ex.ids.resize(cfg.max_seq_len);
            if (clipped.kind == TaskKind::token_classification) ex.labels.resize(cfg.max_seq_len);
        }
    }

    const auto params = model.parameters();
    std::vector<ParamPtr> trainable;
    for (const auto& p : params)
        if (p->trainable) trainable.push_back(p);

    AdamW opt(cfg);
    auto rng = substream(cfg.seed, "shuffle");
    std::vector<std::size_t> order(clipped.size());
    std::iota(order.begin(), order.end(), 0);

    MetricsReport report;
    report.trainable_fraction = model.mask.fraction();
    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + std::ptrdiff_t(start),
                                               order.begin() + std::ptrdiff_t(std::min(order.size(), start + cfg.batch_size)));
            auto fwd = forward_train(model, batch_ids(clipped, idx));
            const auto targets = batch_targets(clipped, idx, fwd.offsets);
            double loss = 0.0;
            Matrix dlogits;
            if (cross_entropy(fwd.logits, targets, loss, dlogits) == 0) continue;
            if (!std::isfinite(loss))
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                                      std::to_string(opt.steps() + 1) + " (loss " + std::to_string(loss) + ")");
            for (const auto& p : trainable) p->zero_grad();
            backward(model, fwd, dlogits);
            opt.step(trainable);
            epoch_loss += loss;
            ++batches;
        }
        report.epoch_loss.push_back(batches ? epoch_loss / double(batches) : 0.0);
    }
    report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.steps = opt.steps();

    std::vector<int> gold, pred;
    const auto preds = predict(model, clipped);
    for (std::size_t i = 0; i < clipped.size(); ++i) {
        const auto& labels = clipped.examples[i].labels;
        gold.insert(gold.end(), labels.begin(), labels.begin() + std::ptrdiff_t(preds[i].labels.size()));
        pred.insert(pred.end(), preds[i].labels.begin(), preds[i].labels.end());
    }
    report.accuracy = accuracy(gold, pred);
    report.f1 = clipped.kind == TaskKind::sequence_classification ? binary_f1(gold, pred, 1) : weighted_f1(gold, pred);
    return report;
}

std::vector<Prediction> predict(const AdaptedModel& model, const EncodedDataset& data, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("predict: batch_size must be positive");
    std::vector<Prediction> out;
    out.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
        const auto ids = batch_ids(data, idx);
        if (model.head.kind == TaskKind::sequence_classification) {
            const Matrix logits = forward_sequence(model, ids);
            for (std::size_t b = 0; b < idx.size(); ++b) {
                Prediction p;
                p.labels.push_back(argmax_row(logits, b));
                Matrix row(1, logits.cols);
                std::copy(logits.row(b).begin(), logits.row(b).end(), row.values.begin());
                p.logits.push_back(std::move(row));
                out.push_back(std::move(p));
            }
        } else {
            auto per_seq = forward_tokens(model, ids);
            for (auto& logits : per_seq) {
                Prediction p;
                for (std::size_t r = 0; r < logits.rows; ++r) p.labels.push_back(argmax_row(logits, r));
                p.logits.push_back(std::move(logits));
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

MetricsReport evaluate(const AdaptedModel& model, const EncodedDataset& data, int positive_label) {
    if (data.empty()) throw std::invalid_argument("evaluate: empty test split");
    if (data.kind != model.head.kind) throw std::invalid_argument("evaluate: dataset task kind differs from the head");
    check_labels(data);
    if (data.num_labels != model.head.num_labels)
        throw InvalidData("evaluate: dataset label vocabulary differs from the head");
    const auto preds = predict(model, data);
    std::vector<int> gold, pred;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& labels = data.examples[i].labels;
        gold.insert(gold.end(), labels.begin(), labels.begin() + std::ptrdiff_t(preds[i].labels.size()));
        pred.insert(pred.end(), preds[i].labels.begin(), preds[i].labels.end());
    }
    MetricsReport r;
    r.accuracy = accuracy(gold, pred);
    r.f1 = data.kind == TaskKind::sequence_classification ? binary_f1(gold, pred, positive_label)
                                                          : weighted_f1(gold, pred);
    r.trainable_fraction = model.mask.fraction();
    return r;
}

double relative_time(double run_seconds, double full_seconds) {
    if (!(full_seconds > 0.0)) throw std::invalid_argument("relative_time: baseline time must be positive");
    return (run_seconds - full_seconds) / full_seconds;
}

nlohmann::json GridResult::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : table)
        rows.push_back({{"learning_rate", p.learning_rate},
                        {"epochs", p.epochs},
                        {"train", p.train_report.to_json()},
                        {"test", p.test_report.to_json()}});
    return {{"best", {{"learning_rate", best.learning_rate}, {"epochs", best.epochs}, {"test", best.test_report.to_json()}}},
            {"table", rows}};
}

GridResult grid_search(const ModelFactory& factory, const EncodedDataset& train_set, const EncodedDataset& test_set,
                       const std::vector<double>& lr_grid, const std::vector<int>& epoch_grid, TrainConfig base,
                       int positive_label) {
    if (lr_grid.empty() || epoch_grid.empty()) throw std::invalid_argument("grid_search: empty grid");
    GridResult result;
    bool have_best = false;
    for (double lr : lr_grid) {
        for (int epochs : epoch_grid) {
            TrainConfig cfg = base;
            cfg.learning_rate = lr;
            cfg.epochs = epochs;
            AdaptedModel model = factory();
            GridPoint point{lr, epochs, train(model, train_set, cfg), {}};
            point.test_report = evaluate(model, test_set, positive_label);
            point.test_report.wall_time_seconds = point.train_report.wall_time_seconds;
            const auto& b = result.best;
            const bool better = !have_best || point.test_report.f1 > b.test_report.f1 ||
                                (point.test_report.f1 == b.test_report.f1 &&
                                 (lr < b.learning_rate || (lr == b.learning_rate && epochs < b.epochs)));
            if (better) {
                result.best = point;
                have_best = true;
            }
            result.table.push_back(std::move(point));
        }
    }
    return result;
}

}  // namespace compfreeze
