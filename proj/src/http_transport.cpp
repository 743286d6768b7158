#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kgconv/gateway.h"

#include <cstdlib>
#include <regex>

namespace kgconv {

namespace {

class HttpTransport : public ChatTransport {
public:
    explicit HttpTransport(GatewayProfile profile) : profile_(std::move(profile)) {
        static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(profile_.endpoint, m, url_re))
            throw ContractViolation("profile " + profile_.name + ": bad endpoint '" + profile_.endpoint + "'");
        base_ = m[1].str();
        path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
        if (!profile_.auth_env.empty()) {
            const char* key = std::getenv(profile_.auth_env.c_str());
            if (!key || !*key) throw ContractViolation("environment variable " + profile_.auth_env + " is not set");
            token_ = key;
        }
    }

    TransportReply send(const ChatRequest& request) override {
        httplib::Client client(base_);
        client.set_connection_timeout(30);
        client.set_read_timeout(300);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        const auto body = completion_body(profile_, request).dump();
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) return {0, "", httplib::to_string(res.error())};
        if (res->status < 200 || res->status >= 300) return {res->status, "", res->body.substr(0, 512)};
        try {
            const auto j = nlohmann::json::parse(res->body);
            return {res->status, j.at("choices").at(0).at("message").at("content").get<std::string>(), ""};
        } catch (const std::exception& ex) {
            // a 200 without a usable body is treated as a server fault
            return {502, "", std::string("unreadable completion: ") + ex.what()};
        }
    }

private:
    GatewayProfile profile_;
    std::string base_;
    std::string path_;
    std::string token_;
};

}  // namespace

std::shared_ptr<ChatTransport> make_http_transport(const GatewayProfile& profile) {
    return std::make_shared<HttpTransport>(profile);
}

}  // namespace kgconv
