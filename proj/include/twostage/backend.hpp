// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/image.hpp"
#include "twostage/mask_ops.hpp"
#include "twostage/metrics.hpp"

namespace twostage {

struct Txt2ImgRequest {
    std::string prompt;
    std::int64_t seed = 0;
    int width = 1024;
    int height = 1024;
};

struct Img2ImgRequest {
    std::string prompt;
    ImageBuffer init;
    double strength = 0.75;
    std::int64_t seed = 0;
    std::string lora_ref;
};

struct SegmentRequest {
    ImageBuffer image;
    std::string label;
};

struct SegmentResult {
    std::vector<Detection> detections;
    std::vector<MaskCandidate> masks;
};

/// Exactly one of image / text is set.
struct EmbedRequest {
    std::optional<ImageBuffer> image;
    std::optional<std::string> text;
    EmbeddingSource source = EmbeddingSource::dino;
};

/// Failure reported by, or while talking to, a backend.
class BackendError : public std::runtime_error {
public:
    BackendError(std::string endpoint, int status, const std::string& message)
        : std::runtime_error(message), endpoint_(std::move(endpoint)), status_(status) {}

    const std::string& endpoint() const noexcept { return endpoint_; }
    /// HTTP status, or 0 when the request never completed.
    int status() const noexcept { return status_; }

private:
    std::string endpoint_;
    int status_;
};

/// Model inference service. Implementations must tolerate concurrent calls.
class BackendClient {
public:
    virtual ~BackendClient() = default;

    virtual ImageBuffer txt2img(const Txt2ImgRequest& req) = 0;
    virtual ImageBuffer img2img(const Img2ImgRequest& req) = 0;
    virtual SegmentResult segment(const SegmentRequest& req) = 0;
    virtual EmbeddingVector embed(const EmbedRequest& req) = 0;

    /// True when equal requests always produce equal responses.
    virtual bool deterministic() const { return false; }
    virtual std::string describe() const = 0;
};

} // namespace twostage
