#include "compfreeze/llm_gateway.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include "compfreeze/data_pipeline.hpp"
#include "compfreeze/rng.hpp"

namespace compfreeze::llm {

nlohmann::json to_json(const Messages& m) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& msg : m) out.push_back({{"role", msg.role}, {"content", msg.content}});
    return out;
}

PromptTemplate spam_template() {
    return {"spam", std::nullopt,
            "Classify the following input sentences as `ham' or `spam'. Provide the classification result in csv "
            "format, including the original input sentence and the predicted label.",
            "Input"};
}

PromptTemplate dga_template() {
    return {"dga", std::nullopt,
            "Classify the domain names as `DGA' or `Non-DGA'. Provide the classification result in csv format, "
            "including the original domain names and the predicted label.",
            "Input Domains"};
}

PromptTemplate cti_simple_template() {
    return {"cti_simple", std::nullopt,
            "Considering the following named entities, {list_of_entities}, your task is to classify each token to "
            "one of the labels provided. For each token provided, generate a corresponding label from the list. "
            "Ensure that the output is in format: input_token, predicted_label",
            "Input"};
}

PromptTemplate cti_detailed_template() {
    return {"cti_detailed",
            "You are an expert Named Entity Recognition (NER) system that follows the task description given. You "
            "will classify named entities using the BIOES labeling format, where `B-’ indicates beginning of a "
            "multi-token entity, `I-’ indicates inside of multi-token entity and `E-’ indicates end of "
            "multi-token entity. `S-’ indicates a single token entity and `O’ refers to token not part of "
            "any entity.",
            "Consider the following named entities, {list_of_entities}, your task is to identify and classify each "
            "token to named entities. You will use the following description of named entities:\n"
            "{entity_descriptions}\n"
            "Classification Rules:\n"
            "1. While classifying, carefully consider the named entities definitions and labels of named entities "
            "provided.\n"
            "2. Only output the labeled entities in BIOES format, without any explanations or extra text.\n"
            "3. For tokens not belonging to any entity, mark them as O (Outside).\n"
            "Output Format: Ensure that the output is in format: input token, predicted label",
            "Input"};
}

PromptTemplate template_by_name(const std::string& name) {
    if (name == "spam") return spam_template();
    if (name == "dga") return dga_template();
    if (name == "cti_simple") return cti_simple_template();
    if (name == "cti_detailed") return cti_detailed_template();
    throw TemplateError("unknown template '" + name + "'");
}

EntityCatalog default_entity_catalog() {
    EntityCatalog c;
    for (const auto& [code, name] : entity_types()) c.emplace_back(code, name);
    return c;
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
    return s;
}

std::string fill(const std::string& text, const EntityCatalog* catalog, const std::string& tpl_name) {
    std::string out = text;
    const bool needs_catalog = out.find("{list_of_entities}") != std::string::npos ||
                               out.find("{entity_descriptions}") != std::string::npos;
    if (needs_catalog) {
        if (!catalog || catalog->empty())
            throw TemplateError("template '" + tpl_name + "' needs a non-empty entity list");
        std::string list, desc;
        for (std::size_t i = 0; i < catalog->size(); ++i) {
            list += (i ? ", " : "") + (*catalog)[i].first;
            desc += "- " + (*catalog)[i].first + ": " + (*catalog)[i].second + (i + 1 < catalog->size() ? "\n" : "");
        }
        out = replace_all(out, "{list_of_entities}", list);
        out = replace_all(out, "{entity_descriptions}", desc);
    }
    static const std::regex leftover(R"(\{[A-Za-z_ ]+\})");
    std::smatch m;
    if (std::regex_search(out, m, leftover))
        throw TemplateError("template '" + tpl_name + "' has unresolved placeholder " + m.str());
    return out;
}

std::string input_marker(const PromptTemplate& tpl) { return "\n\n" + tpl.input_header + ":\n"; }

}  // namespace

Messages render_prompt(const PromptTemplate& tpl, const std::vector<std::string>& inputs, const EntityCatalog* catalog) {
    if (inputs.empty()) throw TemplateError("template '" + tpl.name + "' rendered with no inputs");
    Messages out;
    if (tpl.system) out.push_back({"system", fill(*tpl.system, catalog, tpl.name)});
    std::string user = fill(tpl.instruction, catalog, tpl.name) + input_marker(tpl);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        user += csv_quote(inputs[i]) + (i + 1 < inputs.size() ? "\n" : "");
    }
    out.push_back({"user", user});
    return out;
}

std::vector<std::string> extract_inputs(const Messages& messages, const PromptTemplate& tpl) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role != "user") continue;
        const auto pos = it->content.find(input_marker(tpl));
        if (pos == std::string::npos) break;
        std::istringstream in(it->content.substr(pos + input_marker(tpl).size()));
        std::vector<std::string> inputs;
        for (const auto& rec : read_csv(in)) {
            if (rec.size() != 1) throw TemplateError("input block line with " + std::to_string(rec.size()) + " fields");
            inputs.push_back(rec[0]);
        }
        return inputs;
    }
    throw TemplateError("no rendered input block for template '" + tpl.name + "'");
}

void LLMEndpointConfig::validate() const {
    if (max_retries < 0) throw std::invalid_argument("LLMEndpointConfig: max_retries must be >= 0");
    if (!(timeout_seconds > 0.0)) throw std::invalid_argument("LLMEndpointConfig: timeout must be positive");
    if (backoff_base_seconds < 0.0) throw std::invalid_argument("LLMEndpointConfig: backoff base must be >= 0");
    if (max_concurrency == 0) throw std::invalid_argument("LLMEndpointConfig: max_concurrency must be positive");
    if (model.empty()) throw std::invalid_argument("LLMEndpointConfig: model id is empty");
}

nlohmann::json LLMEndpointConfig::to_json() const {
    return {{"base_url", base_url},           {"path", path},
            {"model", model},                 {"credential_env", credential_env},
            {"timeout_seconds", timeout_seconds}, {"max_retries", max_retries},
            {"backoff_base_seconds", backoff_base_seconds}, {"temperature", temperature},
            {"max_concurrency", max_concurrency}};
}

Completion ScriptedBackend::send(const Messages& messages) {
    std::lock_guard lock(mu_);
    received_.push_back(messages);
    if (next_ >= replies_.size()) throw TransportError("scripted backend exhausted", false);
    return {replies_[next_++], 0.0, std::nullopt, std::nullopt, 1};
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mu_);
    return received_.size();
}

std::vector<Messages> ScriptedBackend::received() const {
    std::lock_guard lock(mu_);
    return received_;
}

OracleBackend::OracleBackend(PromptTemplate tpl, Gold gold, std::vector<std::string> label_set, OracleMode mode,
                             double flip_prob, std::uint64_t seed)
    : tpl_(std::move(tpl)),
      gold_(std::move(gold)),
      label_set_(std::move(label_set)),
      mode_(mode),
      flip_prob_(flip_prob),
      seed_(seed) {
    if (flip_prob < 0.0 || flip_prob > 1.0) throw std::invalid_argument("OracleBackend: flip_prob outside [0, 1]");
    if (label_set_.size() < 2) throw std::invalid_argument("OracleBackend: need at least two labels");
}

std::string OracleBackend::describe() const {
    switch (mode_) {
        case OracleMode::exact: return "oracle";
        case OracleMode::noisy: return "noisy-oracle(p=" + std::to_string(flip_prob_) + ")";
        case OracleMode::adversarial: return "adversarial";
    }
    return "oracle";
}

std::string OracleBackend::sentence_key(const std::vector<std::string>& tokens) {
    std::string key;
    for (std::size_t i = 0; i < tokens.size(); ++i) key += (i ? "\t" : "") + tokens[i];
    return key;
}

std::string OracleBackend::answer(const std::string& gold, const std::string& key, std::size_t salt) const {
    const bool tokens = tpl_.name.rfind("cti", 0) == 0;
    if (mode_ == OracleMode::adversarial) {
        if (tokens) return gold == "O" ? "S-" + entity_types().front().first : "O";
        for (const auto& l : label_set_)
            if (l != gold) return l;
    }
    if (mode_ == OracleMode::noisy) {
        auto rng = substream(seed_, key + "#" + std::to_string(salt));
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < flip_prob_) {
            std::vector<std::string> others;
            for (const auto& l : label_set_)
                if (l != gold) others.push_back(l);
            return others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
        }
    }
    return gold;
}

Completion OracleBackend::send(const Messages& messages) {
    const auto inputs = extract_inputs(messages, tpl_);
    std::string out;
    if (tpl_.name.rfind("cti", 0) == 0) {
        const std::string key = sentence_key(inputs);
        auto it = gold_.tags.find(key);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const std::string gold = it == gold_.tags.end() ? "?" : it->second.at(i);
            out += csv_quote(inputs[i]) + ", " + (gold == "?" ? gold : answer(gold, key, i)) + "\n";
        }
    } else {
        for (const auto& in : inputs) {
            auto it = gold_.labels.find(in);
            out += csv_quote(in) + "," + (it == gold_.labels.end() ? "?" : answer(it->second, in, 0)) + "\n";
        }
    }
    return {out, 0.0, std::nullopt, std::nullopt, 1};
}

FlakyBackend::FlakyBackend(std::shared_ptr<ChatBackend> inner, int failures, bool retryable, int status)
    : inner_(std::move(inner)), failures_(failures), retryable_(retryable), status_(status) {}

Completion FlakyBackend::send(const Messages& messages) {
    {
        std::lock_guard lock(mu_);
        if (calls_++ < failures_)
            throw TransportError("injected failure " + std::to_string(calls_), retryable_, status_);
    }
    return inner_->send(messages);
}

int FlakyBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner, std::string path)
    : inner_(std::move(inner)), path_(std::move(path)) {}

Completion RecordingBackend::send(const Messages& messages) {
    auto c = inner_->send(messages);
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app);
    out << nlohmann::json{{"messages", to_json(messages)}, {"response", c.text}}.dump() << '\n';
    return c;
}

ReplayBackend::ReplayBackend(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open replay log " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        log_[j.at("messages").dump()] = j.at("response").get<std::string>();
    }
}

Completion ReplayBackend::send(const Messages& messages) {
    auto it = log_.find(to_json(messages).dump());
    if (it == log_.end()) throw TransportError("request not present in replay log", false);
    return {it->second, 0.0, std::nullopt, std::nullopt, 1};
}

LLMClient::LLMClient(std::shared_ptr<ChatBackend> backend, LLMEndpointConfig cfg, Sleeper sleeper)
    : backend_(std::move(backend)), cfg_(std::move(cfg)), sleeper_(std::move(sleeper)) {
    if (!backend_) throw std::invalid_argument("LLMClient: null backend");
    cfg_.validate();
    if (!sleeper_) sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

Completion LLMClient::complete(const Messages& messages) const {
    for (int attempt = 0;; ++attempt) {
        try {
            auto c = backend_->send(messages);
            c.attempts = attempt + 1;
            return c;
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= cfg_.max_retries)
                throw TransportError("after " + std::to_string(attempt + 1) + " attempt(s): " + e.what(),
                                     e.retryable(), e.status());
            sleeper_(std::chrono::duration<double>(cfg_.backoff_base_seconds * std::ldexp(1.0, attempt)));
        }
    }
}

std::vector<CallResult> LLMClient::complete_all(const std::vector<Messages>& batch) const {
    std::vector<CallResult> results(batch.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < batch.size();) {
            try {
                results[i].completion = complete(batch[i]);
            } catch (const std::exception& e) {
                results[i].error = e.what();
            }
        }
    };
    const std::size_t n = std::min(cfg_.max_concurrency, batch.size());
    if (n <= 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    return (pool.clear(), results);
}

namespace {

std::string strip_label(std::string s) {
    s = trim(s);
    auto is_quote = [](const std::string& x, std::size_t i) {
        return x[i] == '\'' || x[i] == '`' || x[i] == '"';
    };
    while (!s.empty() && is_quote(s, 0)) s.erase(0, 1);
    while (!s.empty() && is_quote(s, s.size() - 1)) s.pop_back();
    for (const char* curly : {"‘", "’", "“", "”"}) {
        const std::string q = curly;
        if (s.rfind(q, 0) == 0) s.erase(0, q.size());
        if (s.size() >= q.size() && s.compare(s.size() - q.size(), q.size(), q) == 0) s.erase(s.size() - q.size());
    }
    return trim(s);
}

bool header_word(const std::string& label) {
    const std::string l = to_lower(label);
    return l == "label" || l == "predicted label" || l == "predicted_label" || l == "prediction" || l == "class";
}

/// Splits a response line into fields. Returns nullopt on unbalanced quotes.
std::optional<std::vector<std::string>> split_line(const std::string& line) {
    if (std::count(line.begin(), line.end(), '"') % 2 != 0) return std::nullopt;
    std::istringstream in(line);
    auto recs = read_csv(in);
    if (recs.size() != 1) return std::nullopt;
    return recs[0];
}

std::vector<std::string> response_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

ParsedLabels parse_csv_labels(const std::string& text, const std::vector<std::string>& allowed) {
    ParsedLabels out;
    bool first = true;
    for (const auto& line : response_lines(text)) {
        const bool was_first = std::exchange(first, false);
        if (trim(line).rfind("```", 0) == 0) {
            out.failures.emplace_back(line, "formatting");
            continue;
        }
        const auto fields = split_line(line);
        if (!fields) {
            out.failures.emplace_back(line, "malformed-quoting");
            continue;
        }
        if (fields->size() < 2) {
            out.failures.emplace_back(line, "missing-label");
            continue;
        }
        const std::string label = strip_label(fields->back());
        std::string input = (*fields)[0];
        for (std::size_t i = 1; i + 1 < fields->size(); ++i) input += "," + (*fields)[i];
        input = trim(input);
        const auto match = std::find_if(allowed.begin(), allowed.end(),
                                        [&](const std::string& a) { return to_lower(a) == to_lower(label); });
        if (match != allowed.end()) out.rows.emplace_back(input, *match);
        else out.failures.emplace_back(line, was_first && header_word(label) ? "header" : "invalid-label");
    }
    return out;
}

std::size_t repair_bioes(std::vector<std::string>& tags) {
    std::size_t changed = 0;
    auto coerce = [&](std::size_t i) {
        if (tags[i] != "O") {
            tags[i] = "O";
            ++changed;
        }
    };
    std::size_t i = 0;
    while (i < tags.size()) {
        const std::string& t = tags[i];
        if (tag_index(t) < 0) {
            coerce(i++);
            continue;
        }
        if (t == "O" || t[0] == 'S') {
            ++i;
            continue;
        }
        if (t[0] != 'B') {
            coerce(i++);
            continue;
        }
        const std::string type = t.substr(2);
        std::size_t j = i + 1;
        while (j < tags.size() && tags[j] == "I-" + type) ++j;
        if (j < tags.size() && tags[j] == "E-" + type) {
            i = j + 1;
            continue;
        }
        for (std::size_t k = i; k < j; ++k) coerce(k);
        i = j;
    }
    return changed;
}

TokenLabels parse_token_labels(const std::string& text, const std::vector<std::string>& expected_tokens,
                               const std::vector<std::string>& vocabulary) {
    TokenLabels out;
    std::vector<std::string> tokens, tags;
    bool first = true;
    for (const auto& line : response_lines(text)) {
        const bool was_first = std::exchange(first, false);
        if (trim(line).rfind("```", 0) == 0) {
            out.parsed.failures.emplace_back(line, "formatting");
            continue;
        }
        std::string token, tag;
        if (line.find('"') != std::string::npos) {
            const auto fields = split_line(line);
            if (!fields || fields->size() != 2) {
                out.parsed.failures.emplace_back(line, "malformed-quoting");
                continue;
            }
            token = (*fields)[0];
            tag = (*fields)[1];
        } else {
            const auto comma = line.rfind(',');
            if (comma == std::string::npos) {
                out.parsed.failures.emplace_back(line, "missing-label");
                continue;
            }
            token = line.substr(0, comma);
            tag = line.substr(comma + 1);
        }
        token = trim(token);
        tag = strip_label(tag);
        std::string canon = tag;
        std::transform(canon.begin(), canon.end(), canon.begin(), [](unsigned char c) { return char(std::toupper(c)); });
        if (std::find(vocabulary.begin(), vocabulary.end(), canon) == vocabulary.end()) {
            out.parsed.failures.emplace_back(line, was_first && to_lower(tag).find("label") != std::string::npos
                                                       ? "header"
                                                       : "invalid-tag");
            continue;
        }
        out.parsed.rows.emplace_back(token, canon);
        tokens.push_back(token);
        tags.push_back(canon);
    }
    out.aligned = tokens == expected_tokens;
    if (!out.aligned) {
        std::string reason = "alignment: expected " + std::to_string(expected_tokens.size()) + " tokens, got " +
                             std::to_string(tokens.size());
        for (std::size_t i = 0; i < std::min(tokens.size(), expected_tokens.size()); ++i) {
            if (tokens[i] != expected_tokens[i]) {
                reason += "; first mismatch at " + std::to_string(i);
                break;
            }
        }
        out.parsed.failures.emplace_back(text, reason);
        return out;
    }
    out.tags = std::move(tags);
    out.repaired = repair_bioes(out.tags);
    return out;
}

}  // namespace compfreeze::llm
