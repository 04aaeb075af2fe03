#include "compfreeze/label_forge.hpp"

#include <deque>
#include <set>
#include <stdexcept>

namespace compfreeze {

namespace {
constexpr std::size_t kMaxSampleErrors = 5;

void note(LabelQc& qc, const std::string& msg) {
    if (qc.sample_errors.size() < kMaxSampleErrors) qc.sample_errors.push_back(msg);
}
}  // namespace

nlohmann::json LabelQc::to_json() const {
    return {{"total", total},
            {"labelled", labelled},
            {"invalid", invalid},
            {"transport_failed", transport_failed},
            {"coverage", coverage()},
            {"invalid_fraction", invalid_fraction()},
            {"repaired_tokens", repaired_tokens},
            {"calls", calls},
            {"per_class", per_class},
            {"sample_errors", sample_errors}};
}

LabelledTexts label_texts(const std::vector<std::string>& inputs, const llm::PromptTemplate& tpl,
                          const llm::LLMClient& client, const std::vector<std::string>& allowed,
                          std::size_t batch_size) {
    if (inputs.empty()) throw std::invalid_argument("label_texts: no inputs");
    if (batch_size == 0) throw std::invalid_argument("label_texts: batch_size must be positive");
    std::vector<llm::Messages> requests;
    for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
        const std::vector<std::string> chunk(inputs.begin() + std::ptrdiff_t(start),
                                             inputs.begin() + std::ptrdiff_t(std::min(inputs.size(), start + batch_size)));
        requests.push_back(llm::render_prompt(tpl, chunk));
    }
    const auto results = client.complete_all(requests);

    LabelledTexts out;
    out.source = "llm(" + client.describe() + ")";
    out.qc.total = inputs.size();
    out.qc.calls = requests.size();
    for (std::size_t b = 0; b < results.size(); ++b) {
        const std::size_t start = b * batch_size, stop = std::min(inputs.size(), start + batch_size);
        if (!results[b].ok()) {
            out.qc.transport_failed += stop - start;
            note(out.qc, "batch " + std::to_string(b) + ": " + results[b].error);
            continue;
        }
        const auto parsed = llm::parse_csv_labels(results[b].completion->text, allowed);
        std::map<std::string, std::deque<std::string>> answers;
        for (const auto& [input, label] : parsed.rows) answers[input].push_back(label);
        for (const auto& [raw, reason] : parsed.failures) note(out.qc, reason + ": " + raw);
        for (std::size_t i = start; i < stop; ++i) {
            auto it = answers.find(trim(inputs[i]));
            if (it == answers.end() || it->second.empty()) {
                ++out.qc.invalid;
                continue;
            }
            const std::string label = it->second.front();
            it->second.pop_front();
            out.examples.push_back({inputs[i], label});
            out.source_index.push_back(i);
            ++out.qc.labelled;
            ++out.qc.per_class[label];
        }
    }
    return out;
}

LabelledSentences label_sentences(const std::vector<std::vector<std::string>>& sentences,
                                  const llm::PromptTemplate& tpl, const llm::LLMClient& client,
                                  const llm::EntityCatalog& catalog) {
    if (sentences.empty()) throw std::invalid_argument("label_sentences: no inputs");
    std::vector<llm::Messages> requests;
    for (const auto& s : sentences) requests.push_back(llm::render_prompt(tpl, s, &catalog));
    const auto results = client.complete_all(requests);

    LabelledSentences out;
    out.source = "llm(" + client.describe() + ")";
    out.qc.total = sentences.size();
    out.qc.calls = requests.size();
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (!results[i].ok()) {
            ++out.qc.transport_failed;
            note(out.qc, "sentence " + std::to_string(i) + ": " + results[i].error);
            continue;
        }
        auto parsed = llm::parse_token_labels(results[i].completion->text, sentences[i], tag_vocabulary());
        if (!parsed.aligned) {
            ++out.qc.invalid;
            note(out.qc, "sentence " + std::to_string(i) + ": " + parsed.parsed.failures.back().second);
            continue;
        }
        out.qc.repaired_tokens += parsed.repaired;
        for (const auto& t : parsed.tags) ++out.qc.per_class[t];
        out.examples.push_back({sentences[i], std::move(parsed.tags)});
        out.source_index.push_back(i);
        ++out.qc.labelled;
    }
    return out;
}

nlohmann::json AgreementReport::to_json() const {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [label, c] : per_class)
        classes[label] = {{"agree", c.first}, {"support", c.second},
                          {"agreement", c.second ? double(c.first) / double(c.second) : 0.0}};
    nlohmann::json j = {{"agreement", agreement}, {"compared", compared}, {"per_class", classes},
                        {"confusion", confusion}};
    if (span_f1) j["span_f1"] = *span_f1;
    return j;
}

AgreementReport agreement_report(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
    if (predicted.size() != gold.size()) throw std::invalid_argument("agreement_report: length mismatch");
    AgreementReport r;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        auto& c = r.per_class[gold[i]];
        ++c.second;
        ++r.confusion[gold[i]][predicted[i]];
        if (gold[i] == predicted[i]) {
            ++c.first;
            ++agree;
        }
    }
    r.compared = gold.size();
    r.agreement = r.compared ? double(agree) / double(r.compared) : 1.0;
    return r;
}

AgreementReport agreement_report(const LabelledTexts& llm, const std::vector<TextExample>& gold) {
    std::vector<std::string> p, g;
    for (std::size_t k = 0; k < llm.examples.size(); ++k) {
        const std::size_t i = llm.source_index.at(k);
        if (i >= gold.size() || gold[i].text != llm.examples[k].text)
            throw std::invalid_argument("agreement_report: example " + std::to_string(k) + " is misaligned with gold");
        p.push_back(llm.examples[k].label);
        g.push_back(gold[i].label);
    }
    return agreement_report(p, g);
}

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
    std::vector<Span> spans;
    std::optional<Span> open;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const auto& t = tags[i];
        if (t.size() < 3 || t[1] != '-') {
            open.reset();
            continue;
        }
        const std::string type = t.substr(2);
        switch (t[0]) {
            case 'S': spans.push_back({i, i + 1, type}); open.reset(); break;
            case 'B': open = Span{i, i, type}; break;
            case 'I':
                if (open && open->type != type) open.reset();
                break;
            case 'E':
                if (open && open->type == type) spans.push_back({open->begin, i + 1, type});
                open.reset();
                break;
            default: open.reset();
        }
    }
    return spans;
}

AgreementReport agreement_report(const LabelledSentences& llm, const std::vector<TokenSentence>& gold) {
    std::vector<std::string> p, g;
    std::size_t matched = 0, n_pred = 0, n_gold = 0;
    for (std::size_t k = 0; k < llm.examples.size(); ++k) {
        const std::size_t i = llm.source_index.at(k);
        if (i >= gold.size() || gold[i].tokens != llm.examples[k].tokens)
            throw std::invalid_argument("agreement_report: sentence " + std::to_string(k) + " is misaligned with gold");
        p.insert(p.end(), llm.examples[k].tags.begin(), llm.examples[k].tags.end());
        g.insert(g.end(), gold[i].tags.begin(), gold[i].tags.end());
        const auto ps = extract_spans(llm.examples[k].tags), gs = extract_spans(gold[i].tags);
        const std::set<Span> gold_set(gs.begin(), gs.end());
        for (const auto& s : ps) matched += gold_set.count(s);
        n_pred += ps.size();
        n_gold += gs.size();
    }
    auto r = agreement_report(p, g);
    r.span_f1 = n_pred + n_gold == 0 ? 1.0 : 2.0 * double(matched) / double(n_pred + n_gold);
    return r;
}

}  // namespace compfreeze
