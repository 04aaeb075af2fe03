#include "compfreeze/confidence_router.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <ostream>
#include <stdexcept>

#include "compfreeze/errors.hpp"
#include "compfreeze/metrics.hpp"
#include "compfreeze/tokenizer.hpp"

namespace compfreeze {

ConfidenceMeasure parse_measure(const std::string& name) {
    if (name == "max_prob") return ConfidenceMeasure::max_prob;
    if (name == "margin") return ConfidenceMeasure::margin;
    if (name == "entropy") return ConfidenceMeasure::entropy;
    throw std::invalid_argument("unknown confidence measure '" + name + "'");
}

double confidence_sequence(std::span<const double> logits, ConfidenceMeasure measure) {
    if (logits.size() < 2) throw std::invalid_argument("confidence: need at least two logits");
    if (!std::all_of(logits.begin(), logits.end(), [](double v) { return std::isfinite(v); }))
        throw std::invalid_argument("confidence: non-finite logit");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
    for (double& v : p) v /= z;
    switch (measure) {
        case ConfidenceMeasure::max_prob: return *std::max_element(p.begin(), p.end());
        case ConfidenceMeasure::margin: {
            std::partial_sort(p.begin(), p.begin() + 2, p.end(), std::greater<>());
            return p[0] - p[1];
        }
        case ConfidenceMeasure::entropy: {
            double h = 0.0;
            for (double v : p)
                if (v > 0.0) h -= v * std::log(v);
            return std::clamp(1.0 - h / std::log(double(p.size())), 0.0, 1.0);
        }
    }
    return 0.0;
}

double confidence_sentence(const Matrix& token_logits, const std::vector<bool>& padding, ConfidenceMeasure measure) {
    if (padding.size() != token_logits.rows) throw std::invalid_argument("confidence_sentence: mask length mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < token_logits.rows; ++r) {
        if (padding[r]) continue;
        sum += confidence_sequence(token_logits.row(r), measure);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("confidence_sentence: every position is padding");
    return sum / double(n);
}

void RouterConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("RouterConfig: threshold outside [0, 1]");
    if (batch_size == 0) throw std::invalid_argument("RouterConfig: batch_size must be positive");
}

nlohmann::json RouterConfig::to_json() const {
    const char* m = measure == ConfidenceMeasure::max_prob ? "max_prob"
                    : measure == ConfidenceMeasure::margin ? "margin"
                                                           : "entropy";
    return {{"threshold", threshold},
            {"task", task == TaskKind::sequence_classification ? "sequence" : "token"},
            {"measure", m},
            {"batch_size", batch_size}};
}

const char* to_string(FinalSource s) {
    switch (s) {
        case FinalSource::local: return "local";
        case FinalSource::llm: return "llm";
        case FinalSource::local_fallback: return "local_fallback";
    }
    return "local";
}

nlohmann::json RoutingRecord::to_json() const {
    nlohmann::json j = {{"id", id},
                        {"local", local},
                        {"confidence", confidence},
                        {"decision", routed ? "routed" : "kept"},
                        {"final", final_labels},
                        {"source", to_string(source)}};
    j["llm"] = llm ? nlohmann::json(*llm) : nlohmann::json();
    j["explanation"] = explanation ? nlohmann::json(*explanation) : nlohmann::json();
    if (!fallback_reason.empty()) j["fallback_reason"] = fallback_reason;
    return j;
}

nlohmann::json RouteReport::to_json(const std::string& task) const {
    nlohmann::json j = {{"task", task}, {"inputs", records.size()}, {"routed", routed}, {"fallbacks", fallbacks}};
    j["f1_before"] = f1_before ? nlohmann::json(*f1_before) : nlohmann::json();
    j["f1_after"] = f1_after ? nlohmann::json(*f1_after) : nlohmann::json();
    return j;
}

namespace {

int label_id(const std::vector<std::string>& label_set, const std::string& l) {
    const auto it = std::find(label_set.begin(), label_set.end(), l);
    if (it == label_set.end()) throw InvalidData("label '" + l + "' outside the task vocabulary");
    return int(it - label_set.begin());
}

double score(const std::vector<LocalPrediction>& preds, const std::vector<std::vector<std::string>>& finals,
             const std::vector<std::string>& label_set, TaskKind task) {
    std::vector<int> gold, pred;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].gold.size() != finals[i].size())
            throw std::invalid_argument("route_and_merge: gold and prediction lengths differ for id " +
                                        std::to_string(preds[i].id));
        for (std::size_t k = 0; k < finals[i].size(); ++k) {
            gold.push_back(label_id(label_set, preds[i].gold[k]));
            pred.push_back(label_id(label_set, finals[i][k]));
        }
    }
    return task == TaskKind::sequence_classification ? binary_f1(gold, pred, 1) : weighted_f1(gold, pred);
}

}  // namespace

RouteReport route_and_merge(const std::vector<LocalPrediction>& predictions, const RouterConfig& cfg,
                            const llm::LLMClient& client, const llm::PromptTemplate& tpl,
                            const std::vector<std::string>& label_set, const llm::EntityCatalog* catalog) {
    cfg.validate();
    RouteReport report;
    std::vector<std::size_t> routed;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        RoutingRecord r;
        r.id = p.id;
        r.local = p.predicted;
        r.confidence = p.confidence;
        r.routed = p.confidence < cfg.threshold;
        r.final_labels = p.predicted;
        if (r.routed) routed.push_back(i);
        report.records.push_back(std::move(r));
    }
    report.routed = routed.size();

    auto fallback = [&](RoutingRecord& r, const std::string& why) {
        r.source = FinalSource::local_fallback;
        r.fallback_reason = why;
        ++report.fallbacks;
    };

    if (cfg.task == TaskKind::sequence_classification) {
        std::vector<llm::Messages> requests;
        for (std::size_t start = 0; start < routed.size(); start += cfg.batch_size) {
            std::vector<std::string> texts;
            for (std::size_t k = start; k < std::min(routed.size(), start + cfg.batch_size); ++k)
                texts.push_back(predictions[routed[k]].text);
            requests.push_back(llm::render_prompt(tpl, texts));
        }
        const auto results = client.complete_all(requests);
        for (std::size_t b = 0; b < results.size(); ++b) {
            const std::size_t start = b * cfg.batch_size, stop = std::min(routed.size(), start + cfg.batch_size);
            std::map<std::string, std::deque<std::string>> answers;
            if (results[b].ok()) {
                for (const auto& [input, label] : llm::parse_csv_labels(results[b].completion->text, label_set).rows)
                    answers[input].push_back(label);
            }
            for (std::size_t k = start; k < stop; ++k) {
                auto& r = report.records[routed[k]];
                if (!results[b].ok()) {
                    fallback(r, "transport: " + results[b].error);
                    continue;
                }
                r.explanation = results[b].completion->text;
                auto it = answers.find(trim(predictions[routed[k]].text));
                if (it == answers.end() || it->second.empty()) {
                    fallback(r, "no valid label in reply");
                    continue;
                }
                r.llm = std::vector<std::string>{it->second.front()};
                it->second.pop_front();
                r.final_labels = *r.llm;
                r.source = FinalSource::llm;
            }
        }
    } else {
        std::vector<llm::Messages> requests;
        for (auto i : routed) requests.push_back(llm::render_prompt(tpl, predictions[i].tokens, catalog));
        const auto results = client.complete_all(requests);
        for (std::size_t k = 0; k < routed.size(); ++k) {
            auto& r = report.records[routed[k]];
            if (!results[k].ok()) {
                fallback(r, "transport: " + results[k].error);
                continue;
            }
            r.explanation = results[k].completion->text;
            auto parsed = llm::parse_token_labels(results[k].completion->text, predictions[routed[k]].tokens, label_set);
            if (!parsed.aligned) {
                fallback(r, parsed.parsed.failures.back().second);
                continue;
            }
            r.llm = parsed.tags;
            r.final_labels = parsed.tags;
            r.source = FinalSource::llm;
        }
    }

    const bool have_gold = !predictions.empty() &&
                           std::all_of(predictions.begin(), predictions.end(), [](const auto& p) { return !p.gold.empty(); });
    if (have_gold) {
        std::vector<std::vector<std::string>> before, after;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            before.push_back(predictions[i].predicted);
            after.push_back(report.records[i].final_labels);
        }
        report.f1_before = score(predictions, before, label_set, cfg.task);
        report.f1_after = score(predictions, after, label_set, cfg.task);
    }
    return report;
}

void write_jsonl(std::ostream& out, const std::vector<RoutingRecord>& records) {
    for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<LocalPrediction> local_predictions(const AdaptedModel& model, const std::vector<TokenIds>& ids,
                                               const std::vector<std::string>& texts,
                                               const std::vector<std::vector<std::string>>& tokens,
                                               const std::vector<std::vector<std::string>>& gold,
                                               const std::vector<std::string>& label_set, ConfidenceMeasure measure) {
    std::vector<LocalPrediction> out;
    constexpr std::size_t kBatch = 32;
    for (std::size_t start = 0; start < ids.size(); start += kBatch) {
        const std::vector<TokenIds> batch(ids.begin() + std::ptrdiff_t(start),
                                          ids.begin() + std::ptrdiff_t(std::min(ids.size(), start + kBatch)));
        if (model.head.kind == TaskKind::sequence_classification) {
            const Matrix logits = forward_sequence(model, batch);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const auto row = logits.row(b);
                const auto best = std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
                LocalPrediction p;
                p.id = start + b;
                p.text = texts.at(start + b);
                p.predicted = {label_set.at(best)};
                p.confidence = confidence_sequence(row, measure);
                if (!gold.empty()) p.gold = gold.at(start + b);
                out.push_back(std::move(p));
            }
        } else {
            const auto per_seq = forward_tokens(model, batch);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const Matrix& logits = per_seq[b];
                LocalPrediction p;
                p.id = start + b;
                p.tokens = tokens.at(start + b);
                p.tokens.resize(logits.rows);
                for (std::size_t r = 0; r < logits.rows; ++r) {
                    const auto row = logits.row(r);
                    p.predicted.push_back(label_set.at(std::size_t(std::max_element(row.begin(), row.end()) - row.begin())));
                }
                p.confidence = confidence_sentence(logits, std::vector<bool>(logits.rows, false), measure);
                if (!gold.empty()) {
                    p.gold = gold.at(start + b);
                    p.gold.resize(logits.rows);
                }
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

}  // namespace compfreeze
