#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgconv/common.h"

namespace kgconv {

/// One prior user/assistant exchange: an in-context example for template
/// prompts, or a replayed gold turn for answer requests.
struct Exchange {
    std::string user;
    std::string assistant;
    bool operator==(const Exchange&) const = default;
};

struct ChatRequest {
    std::string system;
    std::vector<Exchange> history;
    std::string user;
    /// Surface token string → bias weight (negative penalises). Sorted, so
    /// serialisation is deterministic.
    std::map<std::string, double> logit_penalties;
    std::string model_profile;
    bool operator==(const ChatRequest&) const = default;
};

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;
};

std::vector<ChatMessage> to_messages(const ChatRequest& request);
nlohmann::ordered_json to_json(const ChatRequest& request);
ChatRequest request_from_json(const nlohmann::json& j);
/// sha256 of the canonical request serialisation.
std::string request_hash(const ChatRequest& request);

class GatewayError : public Error {
public:
    GatewayError(const std::string& what, int status, int attempts)
        : Error(what), status_(status), attempts_(attempts) {}
    int status() const { return status_; }
    int attempts() const { return attempts_; }

private:
    int status_;
    int attempts_;
};

class ReplayError : public Error {
public:
    explicit ReplayError(const std::string& hash)
        : Error("no recorded response for request " + hash), hash_(hash) {}
    const std::string& hash() const { return hash_; }

private:
    std::string hash_;
};

/// Anything that answers chat requests.
class ChatGateway {
public:
    virtual ~ChatGateway() = default;
    virtual std::string chat(const ChatRequest& request) = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{500};
};

struct GatewayProfile {
    std::string name = "default";
    std::string endpoint;
    std::string model;
    std::string auth_env;  // name of the environment variable holding the key
    int max_concurrent = 4;
    int requests_per_minute = 60;
    RetryPolicy retry;
    /// Surface form → endpoint token ids, used to realise logit penalties.
    std::map<std::string, std::vector<int>> logit_bias_tokens;
    double temperature = 0.0;

    /// Throws ContractViolation on non-positive caps.
    void validate() const;
};

GatewayProfile profile_from_json(const nlohmann::json& j);

struct TransportReply {
    int status = 200;  // 0 = network failure
    std::string text;
    std::string error;
};

/// Raw request sender underneath a Gateway (HTTP, scripted mock, ...).
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual TransportReply send(const ChatRequest& request) = 0;
};

bool is_retryable_status(int status);

struct TranscriptEntry {
    std::string hash;
    nlohmann::json request;
    std::string response;
    std::int64_t started_ms = 0;
    std::int64_t finished_ms = 0;
    int attempts = 0;
};

/// Append-only log of every completed request. Thread-safe.
class Transcript {
public:
    Transcript() = default;
    /// Entries are also appended to `path` as JSONL.
    explicit Transcript(const std::string& path);

    void append(TranscriptEntry entry);
    std::vector<TranscriptEntry> entries() const;
    std::size_t size() const;

    static std::vector<TranscriptEntry> load(const std::string& path);

private:
    mutable std::mutex mu_;
    std::vector<TranscriptEntry> entries_;
    std::unique_ptr<std::ofstream> out_;
};

/// Caps in-flight requests and request starts per rolling minute.
class RateLimiter {
public:
    RateLimiter(int max_concurrent, int requests_per_minute);
    void acquire();
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int max_concurrent_;
    int requests_per_minute_;
    int in_flight_ = 0;
    std::deque<std::chrono::steady_clock::time_point> starts_;
};

struct ChatResult {
    std::string text;
    int attempts = 0;
};

/// Profile-driven gateway: rate limiting, retry with exponential backoff,
/// transcript recording. Shareable across threads.
class Gateway : public ChatGateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    Gateway(GatewayProfile profile, std::shared_ptr<ChatTransport> transport,
            std::shared_ptr<Transcript> transcript = nullptr, Sleeper sleeper = {});

    std::string chat(const ChatRequest& request) override { return chat_detailed(request).text; }
    ChatResult chat_detailed(const ChatRequest& request);

    const GatewayProfile& profile() const { return profile_; }

private:
    GatewayProfile profile_;
    std::shared_ptr<ChatTransport> transport_;
    std::shared_ptr<Transcript> transcript_;
    Sleeper sleeper_;
    RateLimiter limiter_;
};

/// Answers from recorded responses keyed by request hash. Repeated identical
/// requests get the recorded responses in their original order.
class ReplayGateway : public ChatGateway {
public:
    explicit ReplayGateway(const std::vector<TranscriptEntry>& entries);
    std::string chat(const ChatRequest& request) override;

private:
    std::mutex mu_;
    std::unordered_map<std::string, std::deque<std::string>> responses_;
};

std::unique_ptr<ChatGateway> replay_gateway(const std::vector<TranscriptEntry>& entries);

/// Chat-completions JSON body for a request under a profile (messages, model,
/// logit_bias). Penalties without a token mapping are dropped.
nlohmann::ordered_json completion_body(const GatewayProfile& profile, const ChatRequest& request);

/// HTTP(S) chat-completions transport. The key is read from profile.auth_env.
std::shared_ptr<ChatTransport> make_http_transport(const GatewayProfile& profile);

}  // namespace kgconv
