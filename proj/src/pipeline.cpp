// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <chrono>

#include <fmt/format.h>

#include "twostage/digest.hpp"
#include "twostage/pipeline.hpp"
#include "twostage/png_io.hpp"
#include "twostage/tensor_store.hpp"
#include "twostage/wire.hpp"

namespace twostage {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string json_digest(const nlohmann::json& j) {
    return sha256_hex(j.dump());
}

// Writes bytes atomically, reads them back and checks the hash.
Artifact persist(const std::filesystem::path& dir, const std::string& name, std::span<const std::byte> bytes,
                 std::vector<std::byte>& reread) {
    const auto path = dir / name;
    const auto tmp = dir / (name + ".tmp");
    write_file_bytes(tmp, bytes);
    std::filesystem::rename(tmp, path);
    const std::string expected = sha256_hex(bytes);
    reread = read_file_bytes(path);
    const std::string actual = sha256_hex(reread);
    if (actual != expected) {
        throw PipelineError("persist", fmt::format("hash mismatch on re-read of {}: wrote {}, read {}", name,
                                                   expected, actual));
    }
    return {name, actual};
}

std::pair<Artifact, ImageBuffer> persist_image(const std::filesystem::path& dir, const std::string& name,
                                               const ImageBuffer& img) {
    std::vector<std::byte> reread;
    Artifact a = persist(dir, name, encode_png(img, 16), reread);
    return {a, decode_png(reread)};
}

std::pair<Artifact, Mask> persist_mask(const std::filesystem::path& dir, const std::string& name, const Mask& mask) {
    std::vector<std::byte> reread;
    Artifact a = persist(dir, name, encode_png(image_from_mask(mask), 8), reread);
    return {a, mask_from_image(decode_png(reread))};
}

std::filesystem::path resolve_lora(const std::filesystem::path& lora, const std::filesystem::path& base_dir) {
    if (lora.is_relative() && !std::filesystem::exists(lora) && std::filesystem::exists(base_dir / lora)) {
        return base_dir / lora;
    }
    return lora;
}

Manifest run_job_impl(const PipelineJob& job, BackendClient& backend, const std::filesystem::path& out_dir,
                      const std::filesystem::path& lora_file) {
    validate(job);

    Manifest m;
    m.job = job;
    m.stage1_prompt = rewrite_stage1(job.prompt, job.subject_name, job.class_label);
    m.stage2_prompt = rewrite_stage2(job.prompt, job.subject_name, job.placeholder_token);

    auto t0 = Clock::now();
    try {
        const TensorStore store = read_store(lora_file);
        const LoraDiscovery found = discover_lora_pairs(store);
        if (found.deltas.empty()) {
            throw std::runtime_error("no LoRA factor pairs found");
        }
        m.lora_pairs = found.deltas.size();
        m.lora_sha256 = sha256_file(lora_file);
    } catch (const std::exception& e) {
        throw PipelineError("lora", fmt::format("LoRA file {}: {}", lora_file.string(), e.what()));
    }
    m.timings_ms["lora_check"] = elapsed_ms(t0);
    std::filesystem::create_directories(out_dir);

    std::string stage = "stage1";
    try {
        // Stage 1: generic image from the class-label prompt.
        t0 = Clock::now();
        const Txt2ImgRequest t2i{m.stage1_prompt, job.seed, job.width, job.height};
        const ImageBuffer generated = backend.txt2img(t2i);
        m.backend_calls.push_back(
            {"/txt2img", json_digest(wire::to_json(t2i)), json_digest(wire::image_response(generated))});
        if (generated.width() != job.width || generated.height() != job.height) {
            throw PipelineError(stage, fmt::format("backend returned {}x{}, requested {}x{}", generated.width(),
                                                   generated.height(), job.width, job.height));
        }
        auto [base_art, base] = persist_image(out_dir, "base.png", generated);
        m.base_image = base_art;
        m.timings_ms["stage1"] = elapsed_ms(t0);

        // Segmentation and mask selection.
        stage = "segment";
        t0 = Clock::now();
        const SegmentRequest seg_req{base, job.class_label};
        const SegmentResult seg = backend.segment(seg_req);
        m.backend_calls.push_back(
            {"/segment", json_digest(wire::to_json(seg_req)), json_digest(wire::to_json(seg))});
        const auto kept = filter_detections(seg.detections, job.segmentation.tau);
        if (kept.empty()) {
            throw PipelineError(stage, "subject not found in base image");
        }
        const Detection& det = best_detection(kept);
        m.detection = det;
        if (seg.masks.empty()) {
            throw PipelineError(stage, "segmenter returned no mask candidates");
        }
        for (const auto& c : seg.masks) {
            if (c.mask.width() != base.width() || c.mask.height() != base.height()) {
                throw PipelineError(stage, fmt::format("mask candidate is {}x{}, image is {}x{}", c.mask.width(),
                                                       c.mask.height(), base.width(), base.height()));
            }
        }
        const Selection sel = select_mask(seg.masks, det.box, job.segmentation.lambda_sel);
        m.selected_mask = sel.index;
        const Mask grown = dilate(seg.masks[sel.index].mask, job.segmentation.dilate_radius);
        if (grown.count_set() == 0) {
            throw PipelineError(stage, "selected mask is empty");
        }
        auto [mask_art, mask] = persist_mask(out_dir, "mask.png", grown);
        m.mask = mask_art;
        m.timings_ms["segment"] = elapsed_ms(t0);

        // Blur.
        stage = "blur";
        t0 = Clock::now();
        const Kernel kernel = gaussian_kernel(job.blur.kernel_size, job.blur.sigma);
        ImageBuffer blurred_img;
        switch (job.blur.mode) {
        case BlurMode::decay:
            blurred_img = decay_blur(base, mask, kernel, job.blur.lambda, job.blur.normalization);
            break;
        case BlurMode::gaussian:
            blurred_img = masked_blur(base, mask, kernel);
            break;
        case BlurMode::gaussian_full:
            blurred_img = gaussian_blur(base, kernel);
            break;
        }
        auto [blur_art, blurred] = persist_image(out_dir, "blurred.png", blurred_img);
        m.blurred = blur_art;
        m.timings_ms["blur"] = elapsed_ms(t0);

        // Stage 2: img2img with the subject LoRA.
        stage = "stage2";
        t0 = Clock::now();
        const Img2ImgRequest i2i{m.stage2_prompt, blurred, job.img2img_strength, job.seed,
                                 job.effective_lora_ref()};
        const ImageBuffer final_img = backend.img2img(i2i);
        m.backend_calls.push_back(
            {"/img2img", json_digest(wire::to_json(i2i)), json_digest(wire::image_response(final_img))});
        auto [final_art, final_decoded] = persist_image(out_dir, "final.png", final_img);
        (void)final_decoded;
        m.final_image = final_art;
        m.timings_ms["stage2"] = elapsed_ms(t0);
    } catch (const std::exception& e) {
        m.status = "failed";
        if (const auto* pe = dynamic_cast<const PipelineError*>(&e)) {
            m.error = fmt::format("{}: {}", pe->stage(), pe->what());
        } else if (const auto* be = dynamic_cast<const BackendError*>(&e)) {
            m.error = fmt::format("{}: backend {} (status {}): {}", stage, be->endpoint(), be->status(), be->what());
        } else {
            m.error = fmt::format("{}: {}", stage, e.what());
        }
        write_manifest(out_dir / "manifest.json", m);
        throw PipelineError(stage, m.error);
    }
    m.status = "complete";
    write_manifest(out_dir / "manifest.json", m);
    return m;
}

} // namespace

Manifest run_job(const PipelineJob& job, BackendClient& backend, const std::filesystem::path& out_dir) {
    return run_job_impl(job, backend, out_dir, job.lora_path);
}

ReplayResult replay_manifest(const std::filesystem::path& manifest_path, BackendClient& backend,
                             const std::filesystem::path& scratch_dir) {
    const Manifest recorded = read_manifest(manifest_path);
    const auto lora = resolve_lora(recorded.job.lora_path, manifest_path.parent_path());
    ReplayResult r;
    r.replayed = run_job_impl(recorded.job, backend, scratch_dir, lora);
    r.final_matches = recorded.final_image && r.replayed.final_image &&
                      recorded.final_image->sha256 == r.replayed.final_image->sha256;
    r.calls_match = recorded.backend_calls == r.replayed.backend_calls;
    return r;
}

} // namespace twostage
