#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "kgconv/conversation_assembler.h"
#include "kgconv/gateway.h"

// Deterministic stand-ins for the four model roles. Responses depend only on
// the request content, so recorded and replayed runs agree byte for byte.
namespace kgconv::mock {

/// Row count of every request it has seen, for batch-size checks.
class Instrumented {
public:
    std::vector<std::size_t> request_sizes() const;
    std::size_t max_request_size() const;

protected:
    void record(std::size_t rows);

private:
    mutable std::mutex mu_;
    std::vector<std::size_t> sizes_;
};

/// Answers a selector request with every predicate row it was offered.
class SelectAllSelector : public ChatGateway, public Instrumented {
public:
    std::string chat(const ChatRequest& request) override;
};

/// Writes a valid template set for the "Turn k: (...)" rows of a request.
class TemplateWriter : public ChatGateway, public Instrumented {
public:
    std::string chat(const ChatRequest& request) override;
};

struct AnswererProfile {
    double p_correct = 0.7;
    double p_na = 0.1;
    std::uint64_t seed = 0;
};

/// Knows the gold answers of a dataset and answers correctly, with "NA", or
/// wrongly, drawn per request from the request hash.
class SimulatedAnswerer : public ChatGateway {
public:
    SimulatedAnswerer(std::span<const Conversation> dataset, AnswererProfile profile = {});
    std::string chat(const ChatRequest& request) override;

private:
    std::map<std::string, std::vector<std::string>> gold_;  // question → objects
    AnswererProfile profile_;
};

/// Rates a turn 1 when some candidate equals some gold answer, ignoring case.
class StringMatchJudge : public ChatGateway {
public:
    std::string chat(const ChatRequest& request) override;
};

}  // namespace kgconv::mock
