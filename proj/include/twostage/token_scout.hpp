// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "twostage/backend.hpp"

namespace twostage {

/// The 28 built-in placeholder candidates.
std::vector<std::string> default_candidates();

struct ScoutConfig {
    std::vector<std::int64_t> seeds{0, 1, 2, 3};
    /// Must contain exactly one "{token}" slot.
    std::string prompt_template = "a photo of {token}";
    int width = 1024;  // generation size
    int height = 1024;
    int ssim_size = 256; // images are reduced to ssim_size^2 luma before scoring
    std::size_t max_in_flight = 4;
    /// Skip seeds whose generation fails instead of failing the token; at least
    /// two generations must still succeed.
    bool tolerate_failures = false;
    /// When set, images go to <out_dir>/<token>/seed_<n>.png.
    std::optional<std::filesystem::path> out_dir;
};

struct TokenReport {
    std::string token;
    std::vector<std::int64_t> seeds; // ascending, successful generations only
    std::vector<std::vector<double>> pairwise_ssim;
    double variability = 0; // 1 - mean off-diagonal SSIM
    int ssim_size = 0;
    std::vector<std::string> images; // relative to out_dir, same order as seeds
    std::vector<std::int64_t> failed_seeds;
};

nlohmann::json to_json(const TokenReport& report);
TokenReport token_report_from_json(const nlohmann::json& j);

/// Substitutes `token` into the template. Throws std::invalid_argument unless
/// the template has exactly one slot.
std::string render_template(const std::string& prompt_template, const std::string& token);

/// Generates one image per seed, scores all unordered pairs with luma SSIM.
/// Seeds are processed in ascending order, so the report does not depend on
/// the order they were given in. Images are quantized to 8 bits before scoring
/// so saved PNGs reproduce the scores exactly.
TokenReport score_token(const std::string& token, BackendClient& backend, const ScoutConfig& config);

struct ScoutFailure {
    std::string token;
    std::string error;
};

struct ScoutResult {
    std::vector<TokenReport> ranked; // variability descending, then token ascending
    std::vector<ScoutFailure> failures; // token ascending
};

/// Scores every candidate and ranks them. When config.out_dir is set the
/// leaderboard is written to <out_dir>/leaderboard.json before returning.
/// Throws std::runtime_error if every candidate failed.
ScoutResult rank_tokens(const std::vector<std::string>& candidates, BackendClient& backend,
                        const ScoutConfig& config);

nlohmann::json leaderboard_json(const ScoutResult& result, const ScoutConfig& config);

} // namespace twostage
