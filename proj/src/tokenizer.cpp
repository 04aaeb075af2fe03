#include "compfreeze/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

namespace compfreeze {

std::vector<std::string> split_whitespace(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Tokenizer::Tokenizer(TokenMode mode, std::size_t max_len) : mode_(mode), max_len_(max_len) {
    if (max_len == 0) throw std::invalid_argument("Tokenizer: max_len must be positive");
    add("[PAD]");
    add("[UNK]");
    add("[CLS]");
}

int Tokenizer::add(const std::string& token) {
    auto [it, inserted] = token_to_id_.emplace(token, int(id_to_token_.size()));
    if (inserted) id_to_token_.push_back(token);
    return it->second;
}

int Tokenizer::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

Tokenizer Tokenizer::build(TokenMode mode, const std::vector<std::string>& corpus, std::size_t max_len,
                           std::size_t min_count, std::size_t max_words) {
    Tokenizer t(mode, max_len);
    std::map<std::string, std::size_t> chars;
    std::map<std::string, std::size_t> words;
    for (const auto& text : corpus) {
        for (char c : to_lower(text)) {
            if (!std::isspace(static_cast<unsigned char>(c))) ++chars[std::string(1, c)];
        }
        if (mode == TokenMode::words) {
            for (const auto& w : split_whitespace(to_lower(text))) ++words[w];
        }
    }
    for (const auto& [c, n] : chars) t.add(c);
    if (mode == TokenMode::words) {
        std::vector<std::pair<std::string, std::size_t>> ranked(words.begin(), words.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        std::size_t kept = 0;
        for (const auto& [w, n] : ranked) {
            if (n < min_count || kept >= max_words) break;
            if (w.size() > 1) {
                t.add("w:" + w);
                ++kept;
            }
        }
    }
    return t;
}

Tokenizer Tokenizer::build_from_tokens(const std::vector<std::vector<std::string>>& sentences, std::size_t max_len) {
    Tokenizer t(TokenMode::words, max_len);
    for (const auto& s : sentences)
        for (const auto& w : s) t.add("w:" + to_lower(w));
    return t;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> ids{kCls};
    auto push = [&](int id) {
        if (ids.size() < max_len_) ids.push_back(id);
    };
    const std::string lower = to_lower(text);
    if (mode_ == TokenMode::characters) {
        for (char c : lower) {
            if (!std::isspace(static_cast<unsigned char>(c))) push(id(std::string(1, c)));
        }
        return ids;
    }
    for (const auto& w : split_whitespace(lower)) {
        if (ids.size() >= max_len_) break;
        auto it = token_to_id_.find("w:" + w);
        if (it != token_to_id_.end()) {
            push(it->second);
        } else {
            for (char c : w) push(id(std::string(1, c)));
        }
    }
    return ids;
}

std::vector<int> Tokenizer::encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    for (const auto& tok : tokens) {
        if (ids.size() >= max_len_) break;
        const std::string key = to_lower(tok);
        auto it = token_to_id_.find("w:" + key);
        ids.push_back(it != token_to_id_.end() ? it->second : kUnk);
    }
    return ids;
}

nlohmann::json Tokenizer::to_json() const {
    return {{"mode", mode_ == TokenMode::characters ? "characters" : "words"},
            {"max_len", max_len_},
            {"tokens", id_to_token_}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
    const std::string mode = j.at("mode");
    Tokenizer t(mode == "characters" ? TokenMode::characters : TokenMode::words, j.at("max_len"));
    const auto tokens = j.at("tokens").get<std::vector<std::string>>();
    for (std::size_t i = 3; i < tokens.size(); ++i) t.add(tokens[i]);
    return t;
}

}  // namespace compfreeze
