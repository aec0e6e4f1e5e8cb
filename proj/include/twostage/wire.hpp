// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON bodies of the backend protocol (all POST, JSON in and out):
//
//   /txt2img  {prompt, seed, width, height}                         -> {image_b64_png}
//   /img2img  {prompt, init_image_b64_png, strength, seed, lora_ref} -> {image_b64_png}
//   /segment  {image_b64_png, label} -> {detections: [{box: [x0,y0,x1,y1], score, label}],
//                                        masks: [mask_b64_png]}
//   /embed    {image_b64_png | text, source?}                        -> {vector: [f32], source}
//
// Failures are non-200 responses carrying {error: string}.

#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "twostage/backend.hpp"

namespace twostage::wire {

using json = nlohmann::json;

/// Images travel as base64 PNG; `bit_depth` applies to encoding only.
std::string encode_image(const ImageBuffer& img, int bit_depth = 8);
ImageBuffer decode_image(const std::string& b64);

json to_json(const Detection& det);
Detection detection_from_json(const json& j);
json detections_to_json(std::span<const Detection> dets);
std::vector<Detection> detections_from_json(const json& j);

json to_json(const Txt2ImgRequest& req);
Txt2ImgRequest txt2img_request_from_json(const json& j);

json to_json(const Img2ImgRequest& req);
Img2ImgRequest img2img_request_from_json(const json& j);

json to_json(const SegmentRequest& req);
SegmentRequest segment_request_from_json(const json& j);

json to_json(const EmbedRequest& req);
EmbedRequest embed_request_from_json(const json& j);

json image_response(const ImageBuffer& img);
ImageBuffer image_from_response(const json& j);

json to_json(const SegmentResult& res);
SegmentResult segment_result_from_json(const json& j, float mask_threshold = 0.5f);

json to_json(const EmbeddingVector& vec);
EmbeddingVector embedding_from_json(const json& j);

json error_body(const std::string& message);

} // namespace twostage::wire
