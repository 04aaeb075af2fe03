#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "compfreeze/data_pipeline.hpp"
#include "compfreeze/llm_gateway.hpp"

namespace compfreeze {

/// labelled + invalid + transport_failed == total.
struct LabelQc {
    std::size_t total = 0;
    std::size_t labelled = 0;
    std::size_t invalid = 0;
    std::size_t transport_failed = 0;
    std::size_t repaired_tokens = 0;
    std::size_t calls = 0;
    std::map<std::string, std::size_t> per_class;
    std::vector<std::string> sample_errors;  // first few, for diagnosis

    double coverage() const { return total ? double(labelled) / double(total) : 0.0; }
    double invalid_fraction() const { return total ? double(invalid) / double(total) : 0.0; }
    nlohmann::json to_json() const;
};

struct LabelledTexts {
    std::vector<TextExample> examples;
    std::vector<std::size_t> source_index;  // position of each example in the unlabelled input
    std::string source;                     // "llm(<backend>)"
    LabelQc qc;
};

struct LabelledSentences {
    std::vector<TokenSentence> examples;
    std::vector<std::size_t> source_index;
    std::string source;
    LabelQc qc;
};

/// Sends `batch_size` inputs per call. Replies are matched to inputs by text;
/// inputs without a valid label are left out of the examples.
LabelledTexts label_texts(const std::vector<std::string>& inputs, const llm::PromptTemplate& tpl,
                          const llm::LLMClient& client, const std::vector<std::string>& allowed,
                          std::size_t batch_size = 20);

/// One sentence per call; replies are BIOES-repaired and must align token for token.
LabelledSentences label_sentences(const std::vector<std::vector<std::string>>& sentences,
                                  const llm::PromptTemplate& tpl, const llm::LLMClient& client,
                                  const llm::EntityCatalog& catalog);

struct AgreementReport {
    double agreement = 0.0;  // exact label match (token-level for sentences)
    std::size_t compared = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;  // gold label -> (agree, support)
    std::map<std::string, std::map<std::string, std::size_t>> confusion;    // gold -> predicted -> count
    std::optional<double> span_f1;                                          // sentences only

    nlohmann::json to_json() const;
};

AgreementReport agreement_report(const std::vector<std::string>& predicted, const std::vector<std::string>& gold);
AgreementReport agreement_report(const LabelledTexts& llm, const std::vector<TextExample>& gold);
AgreementReport agreement_report(const LabelledSentences& llm, const std::vector<TokenSentence>& gold);

struct Span {
    std::size_t begin = 0, end = 0;  // [begin, end)
    std::string type;
    auto operator<=>(const Span&) const = default;
};
std::vector<Span> extract_spans(const std::vector<std::string>& tags);

}  // namespace compfreeze
