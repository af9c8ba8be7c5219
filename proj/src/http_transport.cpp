#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "telekit/gateway.hpp"

namespace telekit::gateway {

namespace {

const char* default_path(Capability c) {
    switch (c) {
        case Capability::scorer: return "/v1/score";
        case Capability::generator: return "/v1/complete";
        case Capability::embedder: return "/v1/embed";
        case Capability::judge: return "/v1/judge";
    }
    return "/";
}

class HttpTransport final : public Transport {
public:
    explicit HttpTransport(const EndpointConfig& config) : config_(config) {
        const auto& url = config.base_url;
        const auto scheme_end = url.find("://");
        const auto path_start = url.find('/', scheme_end + 3);
        origin_ = url.substr(0, path_start);
        if (path_start != std::string::npos) prefix_ = url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        if (config.options.contains("paths")) {
            for (const auto& [k, v] : config.options["paths"].items()) {
                if (const auto cap = parse_capability(k)) paths_[*cap] = v.get<std::string>();
            }
        }
        if (!config.auth_env.empty()) {
            if (const char* token = std::getenv(config.auth_env.c_str())) token_ = token;
        }
    }

    json send(Capability capability, const json& request) override {
        httplib::Client client(origin_);
        const auto secs = static_cast<time_t>(config_.timeout_s);
        const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        const auto it = paths_.find(capability);
        const std::string path = prefix_ + (it != paths_.end() ? it->second : default_path(capability));
        auto res = client.Post(path, headers, request.dump(-1, ' ', false, json::error_handler_t::replace),
                               "application/json");
        if (!res) {
            throw TransportError("http " + origin_ + path + ": " + httplib::to_string(res.error()), true);
        }
        if (res->status == 429 || res->status >= 500) {
            throw TransportError("http " + origin_ + path + ": status " + std::to_string(res->status), true);
        }
        if (res->status >= 400) {
            throw TransportError("http " + origin_ + path + ": status " + std::to_string(res->status) + ": " +
                                     res->body.substr(0, 200),
                                 false);
        }
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw TransportError("http " + origin_ + path + ": invalid JSON body: " + e.what(), false);
        }
    }

private:
    EndpointConfig config_;
    std::string origin_;
    std::string prefix_;
    std::string token_;
    std::map<Capability, std::string> paths_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(const EndpointConfig& config) {
    return std::make_unique<HttpTransport>(config);
}

}  // namespace telekit::gateway
