#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace compfreeze {

enum class TokenMode {
    characters,  // one id per byte (DGA domains)
    words,       // lower-cased whitespace words; unknown words fall back to their characters
};

/// Pluggable tokenizer for the toy host. Ids 0..2 are [PAD], [UNK], [CLS].
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;

    Tokenizer(TokenMode mode, std::size_t max_len);

    /// Builds a vocabulary from a corpus. Word mode keeps words seen at least
    /// `min_count` times plus every character seen.
    static Tokenizer build(TokenMode mode, const std::vector<std::string>& corpus, std::size_t max_len,
                           std::size_t min_count = 1, std::size_t max_words = 20000);
    /// Word vocabulary built from pre-split sentences.
    static Tokenizer build_from_tokens(const std::vector<std::vector<std::string>>& sentences, std::size_t max_len);

    /// [CLS] + tokens, truncated to max_len.
    std::vector<int> encode(const std::string& text) const;
    /// One id per token (unknown -> [UNK]), truncated to max_len.
    std::vector<int> encode_tokens(const std::vector<std::string>& tokens) const;

    std::size_t vocab_size() const { return id_to_token_.size(); }
    std::size_t max_len() const { return max_len_; }
    TokenMode mode() const { return mode_; }
    int id(const std::string& token) const;

    nlohmann::json to_json() const;
    static Tokenizer from_json(const nlohmann::json& j);

private:
    int add(const std::string& token);

    TokenMode mode_;
    std::size_t max_len_;
    std::map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

std::vector<std::string> split_whitespace(const std::string& text);
std::string to_lower(std::string s);
std::string trim(const std::string& s);

}  // namespace compfreeze
