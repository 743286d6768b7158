#include "kgconv/gateway.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <thread>

namespace kgconv {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

std::vector<ChatMessage> to_messages(const ChatRequest& request) {
    std::vector<ChatMessage> out;
    out.push_back({"system", request.system});
    for (const auto& ex : request.history) {
        out.push_back({"user", ex.user});
        out.push_back({"assistant", ex.assistant});
    }
    out.push_back({"user", request.user});
    return out;
}

ojson to_json(const ChatRequest& request) {
    ojson j;
    j["model_profile"] = request.model_profile;
    j["system"] = request.system;
    j["history"] = ojson::array();
    for (const auto& ex : request.history) j["history"].push_back({{"user", ex.user}, {"assistant", ex.assistant}});
    j["user"] = request.user;
    j["logit_penalties"] = ojson::object();
    for (const auto& [token, weight] : request.logit_penalties) j["logit_penalties"][token] = weight;
    return j;
}

ChatRequest request_from_json(const json& j) {
    ChatRequest r;
    r.model_profile = j.value("model_profile", "");
    r.system = j.value("system", "");
    r.user = j.value("user", "");
    if (j.contains("history"))
        for (const auto& ex : j["history"]) r.history.push_back({ex.value("user", ""), ex.value("assistant", "")});
    if (j.contains("logit_penalties"))
        for (const auto& [token, weight] : j["logit_penalties"].items()) r.logit_penalties[token] = weight.get<double>();
    return r;
}

std::string request_hash(const ChatRequest& request) { return sha256_hex(to_json(request).dump()); }

void GatewayProfile::validate() const {
    if (max_concurrent <= 0) throw ContractViolation("profile " + name + ": max_concurrent must be positive");
    if (requests_per_minute <= 0)
        throw ContractViolation("profile " + name + ": requests_per_minute must be positive");
    if (retry.max_attempts <= 0) throw ContractViolation("profile " + name + ": retry.max_attempts must be positive");
}

GatewayProfile profile_from_json(const json& j) {
    GatewayProfile p;
    p.name = j.value("name", p.name);
    p.endpoint = j.value("endpoint", "");
    p.model = j.value("model", "");
    p.auth_env = j.value("auth_env", "");
    p.max_concurrent = j.value("max_concurrent", p.max_concurrent);
    p.requests_per_minute = j.value("requests_per_minute", p.requests_per_minute);
    p.temperature = j.value("temperature", p.temperature);
    if (j.contains("retry")) {
        p.retry.max_attempts = j["retry"].value("max_attempts", p.retry.max_attempts);
        p.retry.backoff_base = std::chrono::milliseconds(j["retry"].value("backoff_ms", 500));
    }
    if (j.contains("logit_bias_tokens"))
        for (const auto& [surface, ids] : j["logit_bias_tokens"].items())
            p.logit_bias_tokens[surface] = ids.get<std::vector<int>>();
    if (j.contains("auth") || j.contains("api_key") || j.contains("token"))
        throw ContractViolation("profile " + p.name + ": credentials must come from the environment (auth_env)");
    p.validate();
    return p;
}

bool is_retryable_status(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

// ---------------------------------------------------------------------------

Transcript::Transcript(const std::string& path)
    : out_(std::make_unique<std::ofstream>(path, std::ios::app | std::ios::binary)) {
    if (!*out_) throw IoError("cannot open transcript " + path);
}

void Transcript::append(TranscriptEntry entry) {
    std::lock_guard lock(mu_);
    if (out_) {
        ojson j;
        j["hash"] = entry.hash;
        j["request"] = entry.request;
        j["response"] = entry.response;
        j["started_ms"] = entry.started_ms;
        j["finished_ms"] = entry.finished_ms;
        j["attempts"] = entry.attempts;
        *out_ << j.dump() << '\n';
        out_->flush();
    }
    entries_.push_back(std::move(entry));
}

std::vector<TranscriptEntry> Transcript::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::size_t Transcript::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::vector<TranscriptEntry> Transcript::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open transcript " + path);
    std::vector<TranscriptEntry> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw ParseError("transcript line " + std::to_string(n) + ": " + ex.what(), line);
        }
        TranscriptEntry e;
        e.hash = j.value("hash", "");
        e.request = j.value("request", json::object());
        e.response = j.value("response", "");
        e.started_ms = j.value("started_ms", std::int64_t{0});
        e.finished_ms = j.value("finished_ms", std::int64_t{0});
        e.attempts = j.value("attempts", 0);
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(int max_concurrent, int requests_per_minute)
    : max_concurrent_(max_concurrent), requests_per_minute_(requests_per_minute) {}

void RateLimiter::acquire() {
    std::unique_lock lock(mu_);
    while (true) {
        const auto now = std::chrono::steady_clock::now();
        while (!starts_.empty() && now - starts_.front() >= std::chrono::minutes(1)) starts_.pop_front();
        if (in_flight_ < max_concurrent_ && static_cast<int>(starts_.size()) < requests_per_minute_) {
            ++in_flight_;
            starts_.push_back(now);
            return;
        }
        if (in_flight_ >= max_concurrent_) {
            cv_.wait(lock);
        } else {
            cv_.wait_until(lock, starts_.front() + std::chrono::minutes(1));
        }
    }
}

void RateLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_all();
}

Gateway::Gateway(GatewayProfile profile, std::shared_ptr<ChatTransport> transport,
                 std::shared_ptr<Transcript> transcript, Sleeper sleeper)
    : profile_(std::move(profile)),
      transport_(std::move(transport)),
      transcript_(std::move(transcript)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      limiter_(profile_.max_concurrent, profile_.requests_per_minute) {
    profile_.validate();
    if (!transport_) throw ContractViolation("gateway without transport");
}

ChatResult Gateway::chat_detailed(const ChatRequest& request) {
    const std::int64_t started = now_ms();
    TransportReply reply;
    int attempt = 0;
    while (true) {
        ++attempt;
        limiter_.acquire();
        try {
            reply = transport_->send(request);
        } catch (...) {
            limiter_.release();
            throw;
        }
        limiter_.release();

        if (reply.status >= 200 && reply.status < 300) break;
        if (!is_retryable_status(reply.status)) {
            throw GatewayError("profile " + profile_.name + ": non-retryable status " + std::to_string(reply.status) +
                                   (reply.error.empty() ? "" : " (" + reply.error + ")"),
                               reply.status, attempt);
        }
        if (attempt >= profile_.retry.max_attempts) {
            throw GatewayError("profile " + profile_.name + ": retries exhausted after " + std::to_string(attempt) +
                                   " attempts, last status " + std::to_string(reply.status),
                               reply.status, attempt);
        }
        const auto delay = profile_.retry.backoff_base * (1LL << std::min(attempt - 1, 16));
        spdlog::debug("gateway {}: status {}, retrying in {} ms", profile_.name, reply.status, delay.count());
        sleeper_(delay);
    }
    if (transcript_) {
        TranscriptEntry entry;
        entry.hash = request_hash(request);
        entry.request = json::parse(to_json(request).dump());
        entry.response = reply.text;
        entry.started_ms = started;
        entry.finished_ms = now_ms();
        entry.attempts = attempt;
        transcript_->append(std::move(entry));
    }
    return {std::move(reply.text), attempt};
}

ReplayGateway::ReplayGateway(const std::vector<TranscriptEntry>& entries) {
    for (const auto& e : entries) responses_[e.hash].push_back(e.response);
}

std::string ReplayGateway::chat(const ChatRequest& request) {
    const std::string hash = request_hash(request);
    std::lock_guard lock(mu_);
    auto it = responses_.find(hash);
    if (it == responses_.end() || it->second.empty()) throw ReplayError(hash);
    std::string out = it->second.front();
    // the last recorded response keeps answering once the queue drains
    if (it->second.size() > 1) it->second.pop_front();
    return out;
}

std::unique_ptr<ChatGateway> replay_gateway(const std::vector<TranscriptEntry>& entries) {
    return std::make_unique<ReplayGateway>(entries);
}

ojson completion_body(const GatewayProfile& profile, const ChatRequest& request) {
    ojson body;
    body["model"] = profile.model;
    body["messages"] = ojson::array();
    for (const auto& m : to_messages(request)) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    body["temperature"] = profile.temperature;
    if (!request.logit_penalties.empty()) {
        std::map<int, int> bias;
        for (const auto& [surface, weight] : request.logit_penalties) {
            const int w = static_cast<int>(std::lround(std::clamp(weight, -100.0, 100.0)));
            const auto it = profile.logit_bias_tokens.find(surface);
            if (it == profile.logit_bias_tokens.end()) {
                spdlog::debug("profile {}: no token ids for '{}', penalty dropped", profile.name, surface);
                continue;
            }
            for (int id : it->second) bias[id] = w;
        }
        if (!bias.empty()) {
            body["logit_bias"] = ojson::object();
            for (const auto& [id, w] : bias) body["logit_bias"][std::to_string(id)] = w;
        }
    }
    return body;
}

}  // namespace kgconv
