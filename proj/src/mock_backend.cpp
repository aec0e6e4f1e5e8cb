// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/mock_backend.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include <fmt/format.h>

#include "twostage/digest.hpp"
#include "twostage/png_io.hpp"

namespace twostage {

namespace {

// Portable uniform draw in [0, 1): std::*_distribution output is
// implementation-defined, the engine's output is not.
double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ImageBuffer procedural_image(std::uint64_t key, int width, int height) {
    std::mt19937_64 rng(key);
    struct Blob {
        double cx, cy, radius, color[3];
    };
    double base[3], grad[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = 0.2 + 0.6 * unit(rng);
        grad[c] = 0.4 * (unit(rng) - 0.5);
    }
    std::vector<Blob> blobs(6);
    for (auto& b : blobs) {
        b.cx = unit(rng);
        b.cy = unit(rng);
        b.radius = 0.05 + 0.2 * unit(rng);
        for (double& c : b.color) c = unit(rng) - 0.5;
    }
    ImageBuffer img(width, height, 3);
    for (int y = 0; y < height; ++y) {
        const double v = (y + 0.5) / height;
        for (int x = 0; x < width; ++x) {
            const double u = (x + 0.5) / width;
            for (int c = 0; c < 3; ++c) {
                double s = base[c] + grad[c] * (u - v);
                for (const auto& b : blobs) {
                    const double d2 = (u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy);
                    s += b.color[c] * std::exp(-d2 / (2 * b.radius * b.radius));
                }
                img.at(x, y, c) = static_cast<float>(std::clamp(s, 0.0, 1.0));
            }
        }
    }
    return img;
}

ImageBuffer noise_image(std::uint64_t key, int width, int height) {
    std::mt19937_64 rng(key);
    ImageBuffer img(width, height, 3);
    for (float& v : img.data()) {
        v = static_cast<float>(unit(rng));
    }
    return img;
}

std::string image_key(const ImageBuffer& img) {
    std::vector<std::byte> bytes(img.data().size() * sizeof(float));
    std::memcpy(bytes.data(), img.data().data(), bytes.size());
    return fmt::format("{}x{}x{}:{}", img.width(), img.height(), img.channels(), sha256_hex(bytes));
}

} // namespace

Mask mock_subject_mask(int width, int height) {
    Mask mask(width, height);
    const double rx = 0.2 * width;
    const double ry = 0.3 * height;
    const double cx = width / 2.0;
    const double cy = height / 2.0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = (x + 0.5 - cx) / rx;
            const double dy = (y + 0.5 - cy) / ry;
            mask.at(x, y) = dx * dx + dy * dy <= 1.0 ? 1.0f : 0.0f;
        }
    }
    return mask;
}

// Images cross the HTTP transport as 8-bit PNG; quantizing here keeps the
// in-process mock bit-identical to the served one.
ImageBuffer MockBackend::txt2img(const Txt2ImgRequest& req) {
    return quantize8(render_txt2img(req));
}

ImageBuffer MockBackend::render_txt2img(const Txt2ImgRequest& req) {
    ++calls_;
    auto it = config_.prompt_styles.find(req.prompt);
    const MockImageStyle style = it != config_.prompt_styles.end() ? it->second : config_.default_style;
    switch (style) {
    case MockImageStyle::constant:
        return procedural_image(hash64("txt2img|" + req.prompt), req.width, req.height);
    case MockImageStyle::noise:
        return noise_image(hash64(fmt::format("noise|{}|{}", req.prompt, req.seed)), req.width, req.height);
    case MockImageStyle::procedural:
        break;
    }
    return procedural_image(hash64(fmt::format("txt2img|{}|{}", req.prompt, req.seed)), req.width, req.height);
}

ImageBuffer MockBackend::img2img(const Img2ImgRequest& req) {
    ++calls_;
    if (!(req.strength >= 0.0 && req.strength <= 1.0)) {
        throw BackendError("img2img", 400, fmt::format("strength {} outside [0, 1]", req.strength));
    }
    const auto key = hash64(fmt::format("img2img|{}|{}|{:.17g}|{}", req.prompt, req.seed, req.strength, req.lora_ref));
    const ImageBuffer init = quantize8(req.init);
    const ImageBuffer texture = procedural_image(key, init.width(), init.height());
    ImageBuffer out = init;
    const double s = req.strength;
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            for (int c = 0; c < out.channels(); ++c) {
                const double t = texture.at(x, y, std::min(c, 2));
                out.at(x, y, c) = static_cast<float>((1.0 - s) * init.at(x, y, c) + s * t);
            }
        }
    }
    return quantize8(out);
}

SegmentResult MockBackend::segment(const SegmentRequest& req) {
    ++calls_;
    if (config_.segment_fixture) {
        return *config_.segment_fixture;
    }
    const int w = req.image.width();
    const int h = req.image.height();
    const Mask subject = mock_subject_mask(w, h);
    const Box box = *bounding_box(subject);

    // Candidates: the subject, its filled box, and a whole-image mask.
    Mask filled(w, h);
    const PixelRect rect = rasterize(box, w, h);
    for (int y = rect.y0; y < rect.y1; ++y) {
        for (int x = rect.x0; x < rect.x1; ++x) {
            filled.at(x, y) = 1.0f;
        }
    }
    SegmentResult res;
    res.detections.push_back({box, config_.detection_score, req.label});
    res.masks.push_back({subject, 0.95});
    res.masks.push_back({filled, 0.80});
    res.masks.push_back({Mask(w, h, 1.0f), 0.10});
    return res;
}

EmbeddingVector MockBackend::embed(const EmbedRequest& req) {
    ++calls_;
    if (req.image.has_value() == req.text.has_value()) {
        throw BackendError("embed", 400, "embed request needs exactly one of image or text");
    }
    const std::string subject = req.image ? image_key(quantize8(*req.image)) : "text:" + *req.text;
    std::mt19937_64 rng(hash64(fmt::format("embed|{}|{}", to_string(req.source), subject)));
    EmbeddingVector vec;
    vec.source = req.source;
    vec.values.resize(config_.embed_dim);
    for (float& v : vec.values) {
        v = static_cast<float>(2.0 * unit(rng) - 1.0);
    }
    return vec;
}

} // namespace twostage
