// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/wire.hpp"

#include <fmt/format.h>

#include "twostage/base64.hpp"
#include "twostage/png_io.hpp"

namespace twostage::wire {

namespace {

template <typename T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw std::invalid_argument(fmt::format("missing field '{}'", key));
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(fmt::format("field '{}' has the wrong type", key));
    }
}

} // namespace

std::string encode_image(const ImageBuffer& img, int bit_depth) {
    return base64_encode(encode_png(img, bit_depth));
}

ImageBuffer decode_image(const std::string& b64) {
    return decode_png(base64_decode(b64));
}

json to_json(const Detection& det) {
    return {{"box", {det.box.x0, det.box.y0, det.box.x1, det.box.y1}}, {"score", det.score}, {"label", det.label}};
}

Detection detection_from_json(const json& j) {
    const auto box = field<std::vector<double>>(j, "box");
    if (box.size() != 4) {
        throw std::invalid_argument("detection box must have 4 coordinates");
    }
    Detection det;
    det.box = {box[0], box[1], box[2], box[3]};
    det.score = field<double>(j, "score");
    det.label = j.value("label", std::string{});
    validate(det);
    return det;
}

json detections_to_json(std::span<const Detection> dets) {
    json arr = json::array();
    for (const auto& d : dets) arr.push_back(to_json(d));
    return arr;
}

std::vector<Detection> detections_from_json(const json& j) {
    if (!j.is_array()) {
        throw std::invalid_argument("detections must be a JSON array");
    }
    std::vector<Detection> out;
    for (const auto& item : j) out.push_back(detection_from_json(item));
    return out;
}

json to_json(const Txt2ImgRequest& req) {
    return {{"prompt", req.prompt}, {"seed", req.seed}, {"width", req.width}, {"height", req.height}};
}

Txt2ImgRequest txt2img_request_from_json(const json& j) {
    Txt2ImgRequest req;
    req.prompt = field<std::string>(j, "prompt");
    req.seed = field<std::int64_t>(j, "seed");
    req.width = j.value("width", req.width);
    req.height = j.value("height", req.height);
    return req;
}

json to_json(const Img2ImgRequest& req) {
    return {{"prompt", req.prompt},
            {"init_image_b64_png", encode_image(req.init)},
            {"strength", req.strength},
            {"seed", req.seed},
            {"lora_ref", req.lora_ref}};
}

Img2ImgRequest img2img_request_from_json(const json& j) {
    Img2ImgRequest req;
    req.prompt = field<std::string>(j, "prompt");
    req.init = decode_image(field<std::string>(j, "init_image_b64_png"));
    req.strength = field<double>(j, "strength");
    req.seed = field<std::int64_t>(j, "seed");
    req.lora_ref = j.value("lora_ref", std::string{});
    return req;
}

json to_json(const SegmentRequest& req) {
    return {{"image_b64_png", encode_image(req.image)}, {"label", req.label}};
}

SegmentRequest segment_request_from_json(const json& j) {
    return {decode_image(field<std::string>(j, "image_b64_png")), field<std::string>(j, "label")};
}

json to_json(const EmbedRequest& req) {
    json j = {{"source", to_string(req.source)}};
    if (req.image) {
        j["image_b64_png"] = encode_image(*req.image);
    } else if (req.text) {
        j["text"] = *req.text;
    }
    return j;
}

EmbedRequest embed_request_from_json(const json& j) {
    EmbedRequest req;
    const bool has_image = j.contains("image_b64_png");
    const bool has_text = j.contains("text");
    if (has_image == has_text) {
        throw std::invalid_argument("embed request needs exactly one of image_b64_png or text");
    }
    if (has_image) {
        req.image = decode_image(field<std::string>(j, "image_b64_png"));
        req.source = EmbeddingSource::dino;
    } else {
        req.text = field<std::string>(j, "text");
        req.source = EmbeddingSource::clip_text;
    }
    if (j.contains("source")) {
        req.source = parse_embedding_source(field<std::string>(j, "source"));
    }
    return req;
}

json image_response(const ImageBuffer& img) {
    return {{"image_b64_png", encode_image(img)}};
}

ImageBuffer image_from_response(const json& j) {
    return decode_image(field<std::string>(j, "image_b64_png"));
}

json to_json(const SegmentResult& res) {
    json masks = json::array();
    for (const auto& m : res.masks) {
        masks.push_back(encode_image(image_from_mask(m.mask)));
    }
    return {{"detections", detections_to_json(res.detections)}, {"masks", masks}};
}

SegmentResult segment_result_from_json(const json& j, float mask_threshold) {
    SegmentResult res;
    res.detections = detections_from_json(field<json>(j, "detections"));
    for (const auto& m : field<json>(j, "masks")) {
        if (!m.is_string()) {
            throw std::invalid_argument("masks must be base64 PNG strings");
        }
        res.masks.push_back({mask_from_image(decode_image(m.get<std::string>()), mask_threshold), std::nullopt});
    }
    return res;
}

json to_json(const EmbeddingVector& vec) {
    return {{"vector", vec.values}, {"source", to_string(vec.source)}};
}

EmbeddingVector embedding_from_json(const json& j) {
    EmbeddingVector vec;
    vec.values = field<std::vector<float>>(j, "vector");
    vec.source = parse_embedding_source(field<std::string>(j, "source"));
    return vec;
}

json error_body(const std::string& message) {
    return {{"error", message}};
}

} // namespace twostage::wire
