#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace compfreeze::llm {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};
using Messages = std::vector<ChatMessage>;

nlohmann::json to_json(const Messages& m);

class TemplateError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PromptTemplate {
    std::string name;
    std::optional<std::string> system;
    std::string instruction;  // may hold {list_of_entities} and {entity_descriptions}
    std::string input_header;
};

PromptTemplate spam_template();
PromptTemplate dga_template();
PromptTemplate cti_simple_template();
PromptTemplate cti_detailed_template();
/// spam | dga | cti_simple | cti_detailed
PromptTemplate template_by_name(const std::string& name);

/// (label, description) pairs.
using EntityCatalog = std::vector<std::pair<std::string, std::string>>;
EntityCatalog default_entity_catalog();

/// Inputs are written one CSV-quoted field per line below the input header,
/// so distinct input lists always render to distinct bytes.
Messages render_prompt(const PromptTemplate& tpl, const std::vector<std::string>& inputs,
                       const EntityCatalog* catalog = nullptr);
/// Inverse of the input block of render_prompt.
std::vector<std::string> extract_inputs(const Messages& messages, const PromptTemplate& tpl);

struct LLMEndpointConfig {
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4";
    std::string credential_env = "OPENAI_API_KEY";
    double timeout_seconds = 60.0;
    int max_retries = 3;
    double backoff_base_seconds = 1.0;
    double temperature = 0.0;
    std::size_t max_concurrency = 4;

    void validate() const;
    nlohmann::json to_json() const;  // never includes the credential
};

class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, bool retryable, int status = 0)
        : std::runtime_error(what), retryable_(retryable), status_(status) {}
    bool retryable() const { return retryable_; }
    int status() const { return status_; }

private:
    bool retryable_;
    int status_;
};

struct Completion {
    std::string text;
    double latency_ms = 0.0;
    std::optional<long> prompt_tokens;
    std::optional<long> completion_tokens;
    int attempts = 1;
};

/// One attempt at a chat completion. Throws TransportError on failure.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual Completion send(const Messages& messages) = 0;
    virtual std::string describe() const = 0;
};

/// OpenAI-style chat-completion endpoint over cpp-httplib.
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(LLMEndpointConfig cfg);
    Completion send(const Messages& messages) override;
    std::string describe() const override { return "http:" + cfg_.base_url + cfg_.path + " model=" + cfg_.model; }

    static nlohmann::json request_body(const LLMEndpointConfig& cfg, const Messages& messages);
    static Completion parse_response(const std::string& body);

private:
    LLMEndpointConfig cfg_;
};

/// Returns canned replies in order; throws once exhausted.
class ScriptedBackend : public ChatBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    Completion send(const Messages& messages) override;
    std::string describe() const override { return "scripted"; }
    std::size_t calls() const;
    std::vector<Messages> received() const;

private:
    mutable std::mutex mu_;
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
    std::vector<Messages> received_;
};

enum class OracleMode { exact, noisy, adversarial };

/// Answers from gold labels. Classification gold maps an input to its label;
/// token gold maps the tab-joined tokens of a sentence to its tags. Noise is
/// drawn per input from (seed, input), so results do not depend on call order.
class OracleBackend : public ChatBackend {
public:
    struct Gold {
        std::map<std::string, std::string> labels;
        std::map<std::string, std::vector<std::string>> tags;
    };

    OracleBackend(PromptTemplate tpl, Gold gold, std::vector<std::string> label_set, OracleMode mode = OracleMode::exact,
                  double flip_prob = 0.0, std::uint64_t seed = 0);
    Completion send(const Messages& messages) override;
    std::string describe() const override;

    static std::string sentence_key(const std::vector<std::string>& tokens);

private:
    std::string answer(const std::string& gold, const std::string& key, std::size_t salt) const;

    PromptTemplate tpl_;
    Gold gold_;
    std::vector<std::string> label_set_;
    OracleMode mode_;
    double flip_prob_;
    std::uint64_t seed_;
};

/// Fails the first `failures` calls, then delegates.
class FlakyBackend : public ChatBackend {
public:
    FlakyBackend(std::shared_ptr<ChatBackend> inner, int failures, bool retryable = true, int status = 503);
    Completion send(const Messages& messages) override;
    std::string describe() const override { return "flaky(" + inner_->describe() + ")"; }
    int calls() const;

private:
    std::shared_ptr<ChatBackend> inner_;
    int failures_;
    bool retryable_;
    int status_;
    mutable std::mutex mu_;
    int calls_ = 0;
};

/// Appends {"messages", "response"} JSON lines for every successful call.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::string path);
    Completion send(const Messages& messages) override;
    std::string describe() const override { return "record(" + inner_->describe() + ")"; }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::string path_;
    std::mutex mu_;
};

/// Serves responses from a recorded log; unknown requests are a
/// non-retryable error.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(const std::string& path);
    Completion send(const Messages& messages) override;
    std::string describe() const override { return "replay"; }
    std::size_t size() const { return log_.size(); }

private:
    std::map<std::string, std::string> log_;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

struct CallResult {
    std::optional<Completion> completion;
    std::string error;
    bool ok() const { return completion.has_value(); }
};

/// Retries with exponential backoff (base * 2^k) on retryable failures.
class LLMClient {
public:
    LLMClient(std::shared_ptr<ChatBackend> backend, LLMEndpointConfig cfg, Sleeper sleeper = {});

    /// Throws TransportError after the last attempt.
    Completion complete(const Messages& messages) const;
    /// Runs up to max_concurrency requests at once; results keep input order.
    std::vector<CallResult> complete_all(const std::vector<Messages>& batch) const;

    const LLMEndpointConfig& config() const { return cfg_; }
    std::string describe() const { return backend_->describe(); }

private:
    std::shared_ptr<ChatBackend> backend_;
    LLMEndpointConfig cfg_;
    Sleeper sleeper_;
};

struct ParsedLabels {
    std::vector<std::pair<std::string, std::string>> rows;      // (input, label)
    std::vector<std::pair<std::string, std::string>> failures;  // (raw line, reason)
};

/// One row per non-blank line. Fields follow CSV quoting; an unquoted line
/// with extra commas keeps everything before the last comma as the input.
/// Labels match the allowed set case-insensitively and come back canonical.
ParsedLabels parse_csv_labels(const std::string& text, const std::vector<std::string>& allowed);

struct TokenLabels {
    ParsedLabels parsed;
    bool aligned = false;           // parsed tokens equal the expected tokens in order
    std::vector<std::string> tags;  // repaired, one per expected token when aligned
    std::size_t repaired = 0;       // tokens coerced to O
};

TokenLabels parse_token_labels(const std::string& text, const std::vector<std::string>& expected_tokens,
                               const std::vector<std::string>& vocabulary);

/// Coerces tokens of malformed spans to O; returns the number changed.
std::size_t repair_bioes(std::vector<std::string>& tags);

}  // namespace compfreeze::llm
