#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "compfreeze/tokenizer.hpp"
#include "compfreeze/trainer.hpp"

namespace compfreeze {

struct TextExample {
    std::string text;
    std::string label;
};

struct TokenSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
};

struct RejectedRow {
    std::size_t line = 0;  // 1-based; first line of the sentence for CoNLL input
    std::string raw;
    std::string reason;
};

template <class T>
struct LoadResult {
    std::vector<T> items;
    std::vector<RejectedRow> rejected;
    std::size_t input_rows = 0;  // rows (or sentences) seen, header excluded
    nlohmann::json qc;
};

template <class T>
struct DatasetSplit {
    std::vector<T> train;
    std::vector<T> test;
    std::string provenance;
};

namespace labels {
inline constexpr const char* ham = "ham";
inline constexpr const char* spam = "spam";
inline constexpr const char* dga = "DGA";
inline constexpr const char* non_dga = "Non-DGA";
}  // namespace labels

/// Short codes of the 21 CTI entity types, with their long names.
const std::vector<std::pair<std::string, std::string>>& entity_types();
/// "O" followed by B-/I-/E-/S- for each type in entity_types() order: 85 tags.
const std::vector<std::string>& tag_vocabulary();
/// Index into tag_vocabulary(), or -1.
int tag_index(const std::string& tag);

struct BioesViolation {
    std::size_t position = 0;
    std::string rule;
};

/// Empty result means the sequence is well-formed.
std::vector<BioesViolation> validate_bioes(const std::vector<std::string>& tags);

/// RFC 4180 records: quoted fields, doubled quotes, CRLF or LF, embedded newlines.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::string csv_quote(const std::string& field);

/// Optional "text,label" header. Labels are trimmed and lower-cased.
LoadResult<TextExample> load_spam(const std::string& path);
LoadResult<TextExample> parse_spam(std::istream& in);

/// One domain per line. n = 0 keeps every domain; otherwise a seeded sample.
LoadResult<TextExample> load_dga(const std::string& benign_path, const std::string& dga_path, std::size_t benign_n = 0,
                                 std::size_t dga_n = 0, std::uint64_t seed = 0);
LoadResult<TextExample> parse_dga(std::istream& benign, std::istream& dga, std::size_t benign_n = 0,
                                  std::size_t dga_n = 0, std::uint64_t seed = 0);

/// CoNLL-style "token tag" lines, blank line between sentences.
LoadResult<TokenSentence> load_aptner(const std::string& path);
LoadResult<TokenSentence> parse_aptner(std::istream& in);

struct BalancedSample {
    std::vector<TextExample> items;
    std::map<std::string, std::size_t> counts;
    bool balanced = true;  // every class within one item of n / classes
};

BalancedSample balanced_sample(const std::vector<TextExample>& data, std::size_t n, std::uint64_t seed);
std::vector<TokenSentence> random_sample(const std::vector<TokenSentence>& data, std::size_t n, std::uint64_t seed);

/// Per-label 80/20 (by default) split, seeded.
DatasetSplit<TextExample> stratified_split(const std::vector<TextExample>& data, double test_fraction,
                                          std::uint64_t seed);
DatasetSplit<TokenSentence> random_split(const std::vector<TokenSentence>& data, double test_fraction,
                                         std::uint64_t seed);

std::vector<TextExample> synth_spam(std::size_t n_ham, std::size_t n_spam, std::uint64_t seed);
std::vector<TextExample> synth_dga(std::size_t n_benign, std::size_t n_dga, std::uint64_t seed);
std::vector<TokenSentence> synth_aptner(std::size_t n, std::uint64_t seed);

void write_spam_csv(std::ostream& out, const std::vector<TextExample>& data);
void write_domains(std::ostream& out, const std::vector<TextExample>& data, const std::string& label);
void write_aptner(std::ostream& out, const std::vector<TokenSentence>& data);

nlohmann::json qc_report(const std::vector<TextExample>& data);
nlohmann::json qc_report(const std::vector<TokenSentence>& data);
bool url_shaped(const std::string& token);

/// Label names in id order: {ham, spam}, {Non-DGA, DGA}. The positive class has id 1.
std::vector<std::string> label_names(const std::string& task);

EncodedDataset encode_text(const std::vector<TextExample>& data, const Tokenizer& tok,
                           const std::vector<std::string>& names);
EncodedDataset encode_sentences(const std::vector<TokenSentence>& data, const Tokenizer& tok);

}  // namespace compfreeze
