#pragma once
// Minimal chat-completions client. Deterministic generation settings,
// bounded retries with full-jitter exponential backoff, an on-disk response
// cache keyed by a SHA-256 of the canonicalized request, and a scripted
// mock mode that never opens a socket (so the whole pipeline runs in CI
// with networking disabled).

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "dedukt/detail/digest.hpp"
#include "dedukt/detail/io.hpp"
#include "dedukt/detail/prng.hpp"
#include "dedukt/error.hpp"

namespace dedukt {

struct LlmConfig {
    std::string base_url = "https://api.openai.com";
    std::string model = "gpt-4-1106-preview";
    double temperature = 0.0;
    int max_tokens = 4096;
    double frequency_penalty = 0.0;
    double presence_penalty = 0.0;
    std::string api_key_env = "DEDUKT_API_KEY";
    int max_retries = 3;
    int max_concurrency = 4;
    std::string mock_script; // path; non-empty switches the gateway to mock mode
    std::string cache_dir;   // empty disables the response cache
    int retry_base_ms = 1000;
};

struct ChatMessage {
    std::string role; // system | user | assistant
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
};

struct ChatResponse {
    std::string content;
    std::string finish_reason;
    std::optional<long long> prompt_tokens;
    std::optional<long long> completion_tokens;
};

struct MockRule {
    std::optional<std::string> digest;    // exact request digest
    std::optional<std::string> substring; // substring of the last user message
    std::string reply;
};

// Mock script: JSONL, each record {"reply": ...} plus exactly one of
// "digest" or "substring". Rules are consulted in file order, first match
// wins; duplicate exact digests are rejected.
inline std::vector<MockRule> load_mock_script(const std::string& path) {
    std::string content = detail::read_file(path, "llm_gateway");
    std::vector<MockRule> rules;
    std::unordered_set<std::string> seen_digests;
    std::size_t pos = 0, line_no = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        std::string line = content.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("reply")) {
            throw Error(Errc::SchemaViolation, "llm_gateway",
                        "mock rule at line " + std::to_string(line_no) +
                            " must be an object with 'reply'");
        }
        MockRule rule;
        rule.reply = j["reply"].get<std::string>();
        bool has_digest = j.contains("digest");
        bool has_sub = j.contains("substring");
        if (has_digest == has_sub) {
            throw Error(Errc::SchemaViolation, "llm_gateway",
                        "mock rule at line " + std::to_string(line_no) +
                            " needs exactly one of 'digest' or 'substring'");
        }
        if (has_digest) {
            rule.digest = j["digest"].get<std::string>();
            if (!seen_digests.insert(*rule.digest).second) {
                throw Error(Errc::AmbiguousRule, "llm_gateway",
                            "duplicate digest rule at line " + std::to_string(line_no));
            }
        } else {
            rule.substring = j["substring"].get<std::string>();
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

class LlmGateway {
public:
    struct Stats {
        long provider_calls = 0; // live requests + mock lookups; cache hits excluded
        long attempts = 0;       // including retries
        long cache_hits = 0;
        int max_in_flight = 0;
    };

    explicit LlmGateway(LlmConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.max_concurrency < 1) {
            throw Error(Errc::InvalidParams, "llm_gateway", "max_concurrency must be >= 1");
        }
        if (cfg_.max_retries < 0) {
            throw Error(Errc::InvalidParams, "llm_gateway", "max_retries must be >= 0");
        }
        if (cfg_.temperature < 0) {
            throw Error(Errc::InvalidParams, "llm_gateway", "temperature must be >= 0");
        }
        if (!cfg_.mock_script.empty()) {
            mock_rules_ = load_mock_script(cfg_.mock_script);
            mock_mode_ = true;
        }
    }

    const LlmConfig& config() const { return cfg_; }

    // Request canonicalization: model + every generation field + the full
    // message list, serialized with sorted keys. The cache key and the mock
    // digest rules both use the SHA-256 of this string.
    static std::string canonical_request(const LlmConfig& cfg, const ChatRequest& req) {
        nlohmann::json j;
        j["model"] = cfg.model;
        j["temperature"] = cfg.temperature;
        j["max_tokens"] = cfg.max_tokens;
        j["frequency_penalty"] = cfg.frequency_penalty;
        j["presence_penalty"] = cfg.presence_penalty;
        nlohmann::json msgs = nlohmann::json::array();
        for (const auto& m : req.messages) {
            msgs.push_back({{"role", m.role}, {"content", m.content}});
        }
        j["messages"] = std::move(msgs);
        return j.dump();
    }

    static std::string request_digest(const LlmConfig& cfg, const ChatRequest& req) {
        return detail::sha256_hex(canonical_request(cfg, req));
    }

    ChatResponse chat_complete(const ChatRequest& req) {
        if (req.messages.empty()) {
            throw Error(Errc::InvalidParams, "llm_gateway", "request has no messages");
        }
        std::string digest = request_digest(cfg_, req);
        if (auto cached = cache_lookup(digest)) {
            std::lock_guard lock(mu_);
            ++stats_.cache_hits;
            return *cached;
        }
        ConcurrencySlot slot(*this);
        ChatResponse resp = mock_mode_ ? complete_mock(digest, req) : complete_live(digest, req);
        cache_store(digest, resp);
        return resp;
    }

    Stats stats() const {
        std::lock_guard lock(mu_);
        return stats_;
    }

    // Digests of every provider/mock call actually issued (cache hits absent).
    std::vector<std::string> call_log() const {
        std::lock_guard lock(mu_);
        return call_log_;
    }

private:
    class ConcurrencySlot {
    public:
        explicit ConcurrencySlot(LlmGateway& g) : g_(g) {
            std::unique_lock lock(g_.mu_);
            g_.slot_free_.wait(lock, [&] { return g_.in_flight_ < g_.cfg_.max_concurrency; });
            ++g_.in_flight_;
            g_.stats_.max_in_flight = std::max(g_.stats_.max_in_flight, g_.in_flight_);
        }
        ~ConcurrencySlot() {
            {
                std::lock_guard lock(g_.mu_);
                --g_.in_flight_;
            }
            g_.slot_free_.notify_one();
        }

    private:
        LlmGateway& g_;
    };

    void log_call(const std::string& digest, const ChatRequest& req) {
        std::lock_guard lock(mu_);
        ++stats_.provider_calls;
        call_log_.push_back(digest);
        (void)req;
    }

    ChatResponse complete_mock(const std::string& digest, const ChatRequest& req) {
        log_call(digest, req);
        {
            std::lock_guard lock(mu_);
            ++stats_.attempts;
        }
        const std::string* last_user = nullptr;
        for (const auto& m : req.messages) {
            if (m.role == "user") last_user = &m.content;
        }
        for (const auto& rule : mock_rules_) {
            if (rule.digest && *rule.digest == digest) {
                return ChatResponse{rule.reply, "stop", std::nullopt, std::nullopt};
            }
            if (rule.substring && last_user != nullptr &&
                last_user->find(*rule.substring) != std::string::npos) {
                return ChatResponse{rule.reply, "stop", std::nullopt, std::nullopt};
            }
        }
        throw Error(Errc::MockMiss, "llm_gateway",
                    "no mock rule matches request digest " + digest.substr(0, 12));
    }

    ChatResponse complete_live(const std::string& digest, const ChatRequest& req) {
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw Error(Errc::AuthError, "llm_gateway",
                        "no API key in environment variable " + cfg_.api_key_env);
        }
        log_call(digest, req);

        nlohmann::json body;
        body["model"] = cfg_.model;
        body["messages"] = nlohmann::json::array();
        for (const auto& m : req.messages) {
            body["messages"].push_back({{"role", m.role}, {"content", m.content}});
        }
        body["temperature"] = cfg_.temperature;
        body["max_tokens"] = cfg_.max_tokens;
        body["frequency_penalty"] = cfg_.frequency_penalty;
        body["presence_penalty"] = cfg_.presence_penalty;
        std::string payload = body.dump();

        httplib::Client client(cfg_.base_url);
        client.set_connection_timeout(30, 0);
        client.set_read_timeout(120, 0);
        httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

        thread_local detail::SplitMix64 jitter_rng(
            static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) ^
            reinterpret_cast<std::uintptr_t>(&jitter_rng));

        int last_status = 0;
        std::string last_error;
        std::int64_t retry_after_ms = -1;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                // full jitter on an exponential cap, overridden by Retry-After
                std::int64_t cap = static_cast<std::int64_t>(cfg_.retry_base_ms) << (attempt - 1);
                std::int64_t delay =
                    retry_after_ms >= 0
                        ? retry_after_ms
                        : static_cast<std::int64_t>(jitter_rng.bounded(
                              static_cast<std::uint64_t>(cap) + 1));
                std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            }
            retry_after_ms = -1;
            {
                std::lock_guard lock(mu_);
                ++stats_.attempts;
            }
            auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
            if (!res) {
                last_status = 0;
                last_error = httplib::to_string(res.error());
                continue; // transport error: retry
            }
            last_status = res->status;
            if (res->status == 200) {
                return parse_provider_response(res->body);
            }
            if (res->status == 401 || res->status == 403) {
                throw Error(Errc::AuthError, "llm_gateway",
                            "provider rejected credentials (HTTP " +
                                std::to_string(res->status) + ")");
            }
            if (res->status == 429 || res->status >= 500) {
                if (res->has_header("Retry-After")) {
                    try {
                        retry_after_ms = static_cast<std::int64_t>(
                            std::stod(res->get_header_value("Retry-After")) * 1000.0);
                    } catch (...) {
                        retry_after_ms = -1;
                    }
                }
                last_error = res->body;
                continue;
            }
            throw Error(Errc::ProviderError, "llm_gateway",
                        "provider returned HTTP " + std::to_string(res->status));
        }
        if (last_status == 429) {
            throw Error(Errc::RateLimited, "llm_gateway",
                        "rate limited after " + std::to_string(1 + cfg_.max_retries) + " attempts");
        }
        throw Error(Errc::ProviderError, "llm_gateway",
                    "request failed after " + std::to_string(1 + cfg_.max_retries) +
                        " attempts (last status " + std::to_string(last_status) + ")");
    }

    static ChatResponse parse_provider_response(const std::string& body) {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
            throw Error(Errc::ProviderError, "llm_gateway", "malformed provider response");
        }
        ChatResponse resp;
        const auto& choice = j["choices"][0];
        resp.content = choice.at("message").at("content").get<std::string>();
        resp.finish_reason = choice.value("finish_reason", std::string());
        if (j.contains("usage")) {
            const auto& u = j["usage"];
            if (u.contains("prompt_tokens")) resp.prompt_tokens = u["prompt_tokens"].get<long long>();
            if (u.contains("completion_tokens")) {
                resp.completion_tokens = u["completion_tokens"].get<long long>();
            }
        }
        return resp;
    }

    std::filesystem::path cache_path(const std::string& digest) const {
        return std::filesystem::path(cfg_.cache_dir) / (digest + ".json");
    }

    std::optional<ChatResponse> cache_lookup(const std::string& digest) const {
        if (cfg_.cache_dir.empty()) return std::nullopt;
        auto path = cache_path(digest);
        std::error_code ec;
        if (!std::filesystem::exists(path, ec)) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(detail::read_file(path, "llm_gateway"), nullptr,
                                                 false);
        if (j.is_discarded() || j.value("digest", "") != digest) return std::nullopt;
        ChatResponse resp;
        resp.content = j.at("content").get<std::string>();
        resp.finish_reason = j.value("finish_reason", std::string("stop"));
        return resp;
    }

    void cache_store(const std::string& digest, const ChatResponse& resp) const {
        if (cfg_.cache_dir.empty()) return;
        nlohmann::json j;
        j["model"] = cfg_.model;
        j["created_at"] = iso8601_now();
        j["digest"] = digest;
        j["content"] = resp.content;
        j["finish_reason"] = resp.finish_reason;
        detail::write_file_atomic(cache_path(digest), j.dump() + "\n", "llm_gateway");
    }

    static std::string iso8601_now() {
        std::time_t now = std::time(nullptr);
        std::tm tm{};
#if defined(_WIN32)
        gmtime_s(&tm, &now);
#else
        gmtime_r(&now, &tm);
#endif
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    LlmConfig cfg_;
    bool mock_mode_ = false;
    std::vector<MockRule> mock_rules_;
    mutable std::mutex mu_;
    std::condition_variable slot_free_;
    int in_flight_ = 0;
    Stats stats_;
    std::vector<std::string> call_log_;
};

} // namespace dedukt
