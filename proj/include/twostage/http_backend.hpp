// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "twostage/backend.hpp"

namespace httplib {
class Server;
}

namespace twostage {

/// Client for a backend speaking the JSON protocol in wire.hpp.
class HttpBackendClient final : public BackendClient {
public:
    /// `base_url` is "http://host:port" with an optional path prefix.
    explicit HttpBackendClient(std::string base_url,
                               std::chrono::seconds timeout = std::chrono::seconds(600));
    ~HttpBackendClient() override;

    ImageBuffer txt2img(const Txt2ImgRequest& req) override;
    ImageBuffer img2img(const Img2ImgRequest& req) override;
    SegmentResult segment(const SegmentRequest& req) override;
    EmbeddingVector embed(const EmbedRequest& req) override;

    std::string describe() const override { return base_url_; }

private:
    struct Impl;
    std::string base_url_;
    std::unique_ptr<Impl> impl_;
};

/// Installs POST handlers for /txt2img, /img2img, /segment and /embed that
/// forward to `backend`. Malformed bodies get 400, BackendError keeps its status.
void register_backend_routes(httplib::Server& server, BackendClient& backend);

} // namespace twostage
