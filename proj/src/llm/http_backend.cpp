#include <httplib.h>

#include <chrono>
#include <cstdlib>

#include "compfreeze/llm_gateway.hpp"

namespace compfreeze::llm {

HttpBackend::HttpBackend(LLMEndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

nlohmann::json HttpBackend::request_body(const LLMEndpointConfig& cfg, const Messages& messages) {
    return {{"model", cfg.model}, {"messages", to_json(messages)}, {"temperature", cfg.temperature}};
}

Completion HttpBackend::parse_response(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("response is not JSON: ") + e.what(), false);
    }
    Completion c;
    try {
        c.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw TransportError("response has no choices[0].message.content", false);
    }
    if (j.contains("usage")) {
        const auto& u = j["usage"];
        if (u.contains("prompt_tokens")) c.prompt_tokens = u["prompt_tokens"].get<long>();
        if (u.contains("completion_tokens")) c.completion_tokens = u["completion_tokens"].get<long>();
    }
    return c;
}

Completion HttpBackend::send(const Messages& messages) {
    httplib::Headers headers;
    if (!cfg_.credential_env.empty()) {
        const char* key = std::getenv(cfg_.credential_env.c_str());
        if (!key || !*key) throw TransportError("credential variable " + cfg_.credential_env + " is not set", false);
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    httplib::Client client(cfg_.base_url);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(cfg_.timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(cfg_.path, headers, request_body(cfg_, messages).dump(), "application/json");
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!res) {
        const auto err = res.error();
        throw TransportError("HTTP request failed: " + httplib::to_string(err), true);
    }
    if (res->status >= 400 && res->status < 500)
        throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), false,
                             res->status);
    if (res->status >= 500)
        throw TransportError("HTTP " + std::to_string(res->status), true, res->status);
    auto c = parse_response(res->body);
    c.latency_ms = ms;
    return c;
}

}  // namespace compfreeze::llm
