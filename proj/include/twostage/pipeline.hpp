// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "twostage/backend.hpp"
#include "twostage/blur.hpp"

namespace twostage {

// ---------------------------------------------------------------------------
// Prompt rewriting

/// Number of whole-word occurrences of `word` in `text`. A match must not be
/// preceded or followed by an ASCII letter, digit, '_' or a non-ASCII byte.
std::size_t count_whole_word(std::string_view text, std::string_view word);

/// Replaces every whole-word occurrence of `word`; other bytes are untouched.
/// Throws std::invalid_argument if `word` is empty or absent.
std::string replace_whole_word(std::string_view text, std::string_view word, std::string_view replacement);

std::string rewrite_stage1(std::string_view prompt, std::string_view subject_name, std::string_view class_label);
std::string rewrite_stage2(std::string_view prompt, std::string_view subject_name, std::string_view placeholder);

// ---------------------------------------------------------------------------
// Jobs and manifests

enum class BlurMode {
    decay,        // decay_blur over the whole image
    gaussian,     // plain blur restricted to the mask
    gaussian_full // plain blur of the whole image
};

std::string_view to_string(BlurMode m) noexcept;
BlurMode parse_blur_mode(std::string_view text);

struct BlurSettings {
    BlurMode mode = BlurMode::decay;
    int kernel_size = 151;
    double sigma = 100.0;
    double lambda = 5.0; // decay mode only
    DecayNormalization normalization = DecayNormalization::diagonal;
};

struct SegmentationSettings {
    double tau = 0.3;        // detection score threshold
    double lambda_sel = 0.1; // area penalty in mask selection
    double dilate_radius = 8.0;
};

struct PipelineJob {
    std::string prompt;
    std::string subject_name;
    std::string class_label;
    std::string placeholder_token;
    std::filesystem::path lora_path;
    /// Passed to the backend's img2img; defaults to the LoRA file stem.
    std::string lora_ref;
    std::int64_t seed = 0;
    int width = 1024;
    int height = 1024;
    BlurSettings blur;
    SegmentationSettings segmentation;
    double img2img_strength = 0.75;

    std::string effective_lora_ref() const;
};

/// Throws std::invalid_argument naming the first violated job invariant.
void validate(const PipelineJob& job);

struct Artifact {
    std::string path; // relative to the manifest's directory
    std::string sha256;
    friend bool operator==(const Artifact&, const Artifact&) = default;
};

struct BackendCall {
    std::string endpoint;
    std::string request_digest;  // sha256 of the request's wire JSON
    std::string response_digest; // sha256 of the response's wire JSON
    friend bool operator==(const BackendCall&, const BackendCall&) = default;
};

struct Manifest {
    PipelineJob job;
    std::string status; // "complete" or "failed"
    std::string error;
    std::string stage1_prompt;
    std::string stage2_prompt;
    std::string lora_sha256;
    std::size_t lora_pairs = 0;
    std::optional<Detection> detection;
    std::optional<std::size_t> selected_mask;
    std::optional<Artifact> base_image;
    std::optional<Artifact> mask;
    std::optional<Artifact> blurred;
    std::optional<Artifact> final_image;
    std::vector<BackendCall> backend_calls;
    std::map<std::string, double> timings_ms;
};

nlohmann::json to_json(const PipelineJob& job);
PipelineJob job_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

/// Write-temp-then-rename.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

class PipelineError : public std::runtime_error {
public:
    PipelineError(std::string stage, const std::string& message)
        : std::runtime_error(message), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Runs both stages and writes base.png, mask.png, blurred.png, final.png and
/// manifest.json into `out_dir`. Images are stored as 16-bit PNG, the mask as
/// 8-bit. On failure after the job starts a manifest with status "failed" and
/// the artifacts produced so far is written, then PipelineError is thrown.
Manifest run_job(const PipelineJob& job, BackendClient& backend, const std::filesystem::path& out_dir);

/// Problems found by verify_manifest; empty when every artifact exists and
/// matches its recorded hash.
std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path);

struct ReplayResult {
    bool final_matches = false;
    bool calls_match = false;
    Manifest replayed;
};

/// Re-runs the manifest's job into `scratch_dir` and compares the final
/// artifact hash and the backend call log with the recorded ones.
ReplayResult replay_manifest(const std::filesystem::path& manifest_path, BackendClient& backend,
                             const std::filesystem::path& scratch_dir);

} // namespace twostage
