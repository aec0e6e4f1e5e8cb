// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <string>

#include "twostage/backend.hpp"

namespace twostage {

enum class MockImageStyle {
    procedural, // smooth blobs keyed by (prompt, seed)
    constant,   // keyed by prompt only: every seed gives the same image
    noise,      // i.i.d. uniform samples keyed by (prompt, seed)
};

struct MockConfig {
    MockImageStyle default_style = MockImageStyle::procedural;
    /// Per-prompt style overrides (exact prompt match).
    std::map<std::string, MockImageStyle> prompt_styles;

    /// Returned verbatim by segment() when set.
    std::optional<SegmentResult> segment_fixture;
    /// With no fixture: an elliptical subject centred in the image, reported by
    /// one detection with this score and three candidate masks.
    double detection_score = 0.9;

    std::size_t embed_dim = 64;
};

/// Fully deterministic test double for the backend protocol.
class MockBackend final : public BackendClient {
public:
    explicit MockBackend(MockConfig config = {}) : config_(std::move(config)) {}

    ImageBuffer txt2img(const Txt2ImgRequest& req) override;
    /// (1 - strength) * init + strength * texture(prompt, seed, strength, lora_ref).
    /// Images in and out are quantized to 8 bits, as on the HTTP transport.
    ImageBuffer img2img(const Img2ImgRequest& req) override;
    SegmentResult segment(const SegmentRequest& req) override;
    EmbeddingVector embed(const EmbedRequest& req) override;

    bool deterministic() const override { return true; }
    std::string describe() const override { return "mock"; }

    std::size_t call_count() const noexcept { return calls_.load(); }

private:
    ImageBuffer render_txt2img(const Txt2ImgRequest& req);
    MockConfig config_;
    std::atomic<std::size_t> calls_{0};
};

/// The centred elliptical subject mask the mock segmenter reports.
Mask mock_subject_mask(int width, int height);

} // namespace twostage
