// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "twostage/digest.hpp"
#include "twostage/pipeline.hpp"
#include "twostage/wire.hpp"

namespace twostage {

using nlohmann::json;

namespace {

json artifact_json(const std::optional<Artifact>& a) {
    if (!a) return nullptr;
    return {{"path", a->path}, {"sha256", a->sha256}};
}

std::optional<Artifact> artifact_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const auto& a = j.at(key);
    return Artifact{a.at("path").get<std::string>(), a.at("sha256").get<std::string>()};
}

} // namespace

std::string_view to_string(BlurMode m) noexcept {
    switch (m) {
    case BlurMode::decay: return "decay";
    case BlurMode::gaussian: return "gaussian";
    case BlurMode::gaussian_full: return "gaussian_full";
    }
    return "decay";
}

BlurMode parse_blur_mode(std::string_view text) {
    if (text == "decay") return BlurMode::decay;
    if (text == "gaussian") return BlurMode::gaussian;
    if (text == "gaussian_full") return BlurMode::gaussian_full;
    throw std::invalid_argument(fmt::format("unknown blur mode '{}'", text));
}

std::string PipelineJob::effective_lora_ref() const {
    return lora_ref.empty() ? lora_path.stem().string() : lora_ref;
}

void validate(const PipelineJob& job) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
    if (job.subject_name.empty()) fail("subject_name is empty");
    if (count_whole_word(job.prompt, job.subject_name) == 0) {
        fail(fmt::format("subject '{}' does not occur in prompt \"{}\"", job.subject_name, job.prompt));
    }
    if (job.class_label.empty()) fail("class_label is empty");
    if (job.placeholder_token.empty()) fail("placeholder_token is empty");
    if (!(job.img2img_strength > 0.0 && job.img2img_strength <= 1.0)) {
        fail(fmt::format("img2img_strength {} outside (0, 1]", job.img2img_strength));
    }
    if (job.width <= 0 || job.height <= 0) fail("image size must be positive");
    if (job.blur.kernel_size < 1 || job.blur.kernel_size % 2 == 0) fail("kernel_size must be odd and positive");
    if (!(job.blur.sigma > 0.0)) fail("sigma must be positive");
    if (!(job.blur.lambda >= 0.0)) fail("lambda must be non-negative");
    const auto& s = job.segmentation;
    if (!(s.tau >= 0.0 && s.tau <= 1.0)) fail("tau must be in [0, 1]");
    if (!(s.lambda_sel >= 0.0)) fail("lambda_sel must be non-negative");
    if (!(s.dilate_radius >= 0.0)) fail("dilate_radius must be non-negative");
}

json to_json(const PipelineJob& job) {
    return {{"prompt", job.prompt},
            {"subject_name", job.subject_name},
            {"class_label", job.class_label},
            {"placeholder_token", job.placeholder_token},
            {"lora_path", job.lora_path.generic_string()},
            {"lora_ref", job.effective_lora_ref()},
            {"seed", job.seed},
            {"width", job.width},
            {"height", job.height},
            {"blur",
             {{"mode", to_string(job.blur.mode)},
              {"kernel_size", job.blur.kernel_size},
              {"sigma", job.blur.sigma},
              {"lambda", job.blur.lambda},
              {"normalization", to_string(job.blur.normalization)}}},
            {"segmentation",
             {{"tau", job.segmentation.tau},
              {"lambda_sel", job.segmentation.lambda_sel},
              {"dilate_radius", job.segmentation.dilate_radius}}},
            {"img2img_strength", job.img2img_strength}};
}

PipelineJob job_from_json(const json& j) {
    PipelineJob job;
    job.prompt = j.at("prompt").get<std::string>();
    job.subject_name = j.at("subject_name").get<std::string>();
    job.class_label = j.at("class_label").get<std::string>();
    job.placeholder_token = j.at("placeholder_token").get<std::string>();
    job.lora_path = j.at("lora_path").get<std::string>();
    job.lora_ref = j.value("lora_ref", std::string{});
    job.seed = j.at("seed").get<std::int64_t>();
    job.width = j.value("width", job.width);
    job.height = j.value("height", job.height);
    if (j.contains("blur")) {
        const auto& b = j.at("blur");
        job.blur.mode = parse_blur_mode(b.value("mode", std::string{"decay"}));
        job.blur.kernel_size = b.value("kernel_size", job.blur.kernel_size);
        job.blur.sigma = b.value("sigma", job.blur.sigma);
        job.blur.lambda = b.value("lambda", job.blur.lambda);
        job.blur.normalization = parse_decay_normalization(b.value("normalization", std::string{"diagonal"}));
    }
    if (j.contains("segmentation")) {
        const auto& s = j.at("segmentation");
        job.segmentation.tau = s.value("tau", job.segmentation.tau);
        job.segmentation.lambda_sel = s.value("lambda_sel", job.segmentation.lambda_sel);
        job.segmentation.dilate_radius = s.value("dilate_radius", job.segmentation.dilate_radius);
    }
    job.img2img_strength = j.value("img2img_strength", job.img2img_strength);
    return job;
}

json to_json(const Manifest& m) {
    json calls = json::array();
    for (const auto& c : m.backend_calls) {
        calls.push_back(
            {{"endpoint", c.endpoint}, {"request_digest", c.request_digest}, {"response_digest", c.response_digest}});
    }
    return {{"job", to_json(m.job)},
            {"status", m.status},
            {"error", m.error},
            {"stage1_prompt", m.stage1_prompt},
            {"stage2_prompt", m.stage2_prompt},
            {"lora_sha256", m.lora_sha256},
            {"lora_pairs", m.lora_pairs},
            {"detection", m.detection ? wire::to_json(*m.detection) : json(nullptr)},
            {"selected_mask", m.selected_mask ? json(*m.selected_mask) : json(nullptr)},
            {"artifacts",
             {{"base_image", artifact_json(m.base_image)},
              {"mask", artifact_json(m.mask)},
              {"blurred", artifact_json(m.blurred)},
              {"final", artifact_json(m.final_image)}}},
            {"backend_calls", calls},
            {"timings_ms", m.timings_ms}};
}

Manifest manifest_from_json(const json& j) {
    Manifest m;
    m.job = job_from_json(j.at("job"));
    m.status = j.at("status").get<std::string>();
    m.error = j.value("error", std::string{});
    m.stage1_prompt = j.value("stage1_prompt", std::string{});
    m.stage2_prompt = j.value("stage2_prompt", std::string{});
    m.lora_sha256 = j.value("lora_sha256", std::string{});
    m.lora_pairs = j.value("lora_pairs", std::size_t{0});
    if (j.contains("detection") && !j.at("detection").is_null()) {
        m.detection = wire::detection_from_json(j.at("detection"));
    }
    if (j.contains("selected_mask") && !j.at("selected_mask").is_null()) {
        m.selected_mask = j.at("selected_mask").get<std::size_t>();
    }
    const auto& a = j.at("artifacts");
    m.base_image = artifact_from(a, "base_image");
    m.mask = artifact_from(a, "mask");
    m.blurred = artifact_from(a, "blurred");
    m.final_image = artifact_from(a, "final");
    for (const auto& c : j.at("backend_calls")) {
        m.backend_calls.push_back({c.at("endpoint").get<std::string>(), c.at("request_digest").get<std::string>(),
                                   c.at("response_digest").get<std::string>()});
    }
    if (j.contains("timings_ms")) {
        m.timings_ms = j.at("timings_ms").get<std::map<std::string, double>>();
    }
    return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << to_json(m).dump(2) << '\n';
        f.flush();
        if (!f) {
            throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
        }
    }
    std::filesystem::rename(tmp, path);
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return manifest_from_json(json::parse(ss.str()));
}

std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path) {
    std::vector<std::string> problems;
    const Manifest m = read_manifest(manifest_path);
    const auto dir = manifest_path.parent_path();
    auto check = [&](const char* name, const std::optional<Artifact>& a, bool required) {
        if (!a) {
            if (required) problems.push_back(fmt::format("{}: missing from manifest", name));
            return;
        }
        const auto p = dir / a->path;
        if (!std::filesystem::exists(p)) {
            problems.push_back(fmt::format("{}: {} does not exist", name, a->path));
            return;
        }
        const auto h = sha256_file(p);
        if (h != a->sha256) {
            problems.push_back(fmt::format("{}: {} has sha256 {}, manifest says {}", name, a->path, h, a->sha256));
        }
    };
    const bool complete = m.status == "complete";
    check("base_image", m.base_image, complete);
    check("mask", m.mask, complete);
    check("blurred", m.blurred, complete);
    check("final", m.final_image, complete);

    static const char* const kOrder[] = {"/txt2img", "/segment", "/img2img"};
    for (std::size_t i = 0; i < m.backend_calls.size(); ++i) {
        if (i >= 3 || m.backend_calls[i].endpoint != kOrder[i]) {
            problems.push_back(fmt::format("backend call {} ({}) is out of order", i, m.backend_calls[i].endpoint));
        }
    }
    if (complete && m.backend_calls.size() != 3) {
        problems.push_back(fmt::format("complete manifest logs {} backend calls, expected 3", m.backend_calls.size()));
    }
    return problems;
}

} // namespace twostage
