// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/http_backend.hpp"

#include <functional>
#include <mutex>

#include <fmt/format.h>
#include <httplib.h>

#include "twostage/wire.hpp"

namespace twostage {

using wire::json;

namespace {

// Splits "http://host:port/prefix" into the client origin and a path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw std::invalid_argument(fmt::format("backend URL '{}' has no scheme", url));
    }
    if (url.compare(0, scheme, "http") != 0) {
        throw std::invalid_argument(fmt::format("backend URL '{}': only http is supported", url));
    }
    const auto path = url.find('/', scheme + 3);
    if (path == std::string::npos) {
        return {url, ""};
    }
    std::string prefix = url.substr(path);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path), prefix};
}

} // namespace

struct HttpBackendClient::Impl {
    Impl(const std::string& origin, std::string path_prefix, std::chrono::seconds timeout)
        : client(origin), prefix(std::move(path_prefix)) {
        client.set_connection_timeout(std::chrono::seconds(10));
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
    }

    json post(const std::string& endpoint, const json& body) {
        httplib::Result res;
        {
            std::lock_guard lock(mu);
            res = client.Post(prefix + endpoint, body.dump(), "application/json");
        }
        if (!res) {
            throw BackendError(endpoint, 0, fmt::format("{}: {}", endpoint, httplib::to_string(res.error())));
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (res->status != 200) {
            std::string msg = res->body;
            if (parsed.is_object() && parsed.contains("error") && parsed["error"].is_string()) {
                msg = parsed["error"].get<std::string>();
            }
            throw BackendError(endpoint, res->status, fmt::format("{} returned {}: {}", endpoint, res->status, msg));
        }
        if (parsed.is_discarded()) {
            throw BackendError(endpoint, res->status, fmt::format("{} returned a non-JSON body", endpoint));
        }
        return parsed;
    }

    template <typename F>
    auto decode(const std::string& endpoint, const json& body, F&& f) {
        const json resp = post(endpoint, body);
        try {
            return f(resp);
        } catch (const std::exception& e) {
            throw BackendError(endpoint, 200, fmt::format("{}: malformed response: {}", endpoint, e.what()));
        }
    }

    httplib::Client client;
    std::string prefix;
    std::mutex mu;
};

HttpBackendClient::HttpBackendClient(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)) {
    auto [origin, prefix] = split_url(base_url_);
    impl_ = std::make_unique<Impl>(origin, std::move(prefix), timeout);
}

HttpBackendClient::~HttpBackendClient() = default;

ImageBuffer HttpBackendClient::txt2img(const Txt2ImgRequest& req) {
    return impl_->decode("/txt2img", wire::to_json(req), wire::image_from_response);
}

ImageBuffer HttpBackendClient::img2img(const Img2ImgRequest& req) {
    return impl_->decode("/img2img", wire::to_json(req), wire::image_from_response);
}

SegmentResult HttpBackendClient::segment(const SegmentRequest& req) {
    return impl_->decode("/segment", wire::to_json(req), [](const json& j) { return wire::segment_result_from_json(j); });
}

EmbeddingVector HttpBackendClient::embed(const EmbedRequest& req) {
    return impl_->decode("/embed", wire::to_json(req), wire::embedding_from_json);
}

void register_backend_routes(httplib::Server& server, BackendClient& backend) {
    auto route = [&server](const std::string& path, std::function<json(const json&)> handler) {
        server.Post(path, [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
            int status = 200;
            json body;
            const json parsed = json::parse(req.body, nullptr, false);
            if (parsed.is_discarded()) {
                status = 400;
                body = wire::error_body("request body is not JSON");
            } else {
                try {
                    body = handler(parsed);
                } catch (const BackendError& e) {
                    status = e.status() >= 400 ? e.status() : 502;
                    body = wire::error_body(e.what());
                } catch (const std::invalid_argument& e) {
                    status = 400;
                    body = wire::error_body(e.what());
                } catch (const std::exception& e) {
                    status = 500;
                    body = wire::error_body(e.what());
                }
            }
            res.status = status;
            res.set_content(body.dump(), "application/json");
        });
    };
    route("/txt2img", [&backend](const json& j) {
        return wire::image_response(backend.txt2img(wire::txt2img_request_from_json(j)));
    });
    route("/img2img", [&backend](const json& j) {
        return wire::image_response(backend.img2img(wire::img2img_request_from_json(j)));
    });
    route("/segment", [&backend](const json& j) {
        return wire::to_json(backend.segment(wire::segment_request_from_json(j)));
    });
    route("/embed", [&backend](const json& j) {
        return wire::to_json(backend.embed(wire::embed_request_from_json(j)));
    });
}

} // namespace twostage
