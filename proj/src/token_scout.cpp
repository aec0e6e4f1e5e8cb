// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/token_scout.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "twostage/png_io.hpp"
#include "twostage/ssim.hpp"

namespace twostage {

namespace {

constexpr std::string_view kSlot = "{token}";

void check_token(const std::string& token) {
    if (token.empty() || token.find_first_of("/\\") != std::string::npos || token == "." || token == "..") {
        throw std::invalid_argument(fmt::format("invalid candidate token '{}'", token));
    }
}

struct Generation {
    std::optional<ImageBuffer> image;
    std::string error;
};

std::vector<Generation> generate_all(const std::string& prompt, const std::vector<std::int64_t>& seeds,
                                     BackendClient& backend, const ScoutConfig& config) {
    std::vector<Generation> out(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            try {
                out[i].image = backend.txt2img({prompt, seeds[i], config.width, config.height});
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
    };
    const std::size_t n = std::clamp<std::size_t>(config.max_in_flight, 1, seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

} // namespace

std::vector<std::string> default_candidates() {
    return {"immen", "pasqu", "iklan", "rapi",  "bhar",  "ellu",  "ffin",  "icop",  "aben",  "mmor",
            "psal",  "phyl",  "rrrr",  "wozni", "geaux", "koval", "ayles", "mccre", "fortn", "prote",
            "pascu", "lisam", "percu", "alfar", "insom", "offro", "syour", "redon"};
}

std::string render_template(const std::string& prompt_template, const std::string& token) {
    const auto pos = prompt_template.find(kSlot);
    if (pos == std::string::npos || prompt_template.find(kSlot, pos + 1) != std::string::npos) {
        throw std::invalid_argument(
            fmt::format("template '{}' must contain exactly one {} slot", prompt_template, kSlot));
    }
    std::string out = prompt_template;
    out.replace(pos, kSlot.size(), token);
    return out;
}

nlohmann::json to_json(const TokenReport& r) {
    return {{"token", r.token},   {"seeds", r.seeds},         {"pairwise_ssim", r.pairwise_ssim},
            {"variability", r.variability}, {"ssim_size", r.ssim_size}, {"images", r.images},
            {"failed_seeds", r.failed_seeds}};
}

TokenReport token_report_from_json(const nlohmann::json& j) {
    TokenReport r;
    r.token = j.at("token").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::int64_t>>();
    r.pairwise_ssim = j.at("pairwise_ssim").get<std::vector<std::vector<double>>>();
    r.variability = j.at("variability").get<double>();
    r.ssim_size = j.value("ssim_size", 0);
    r.images = j.value("images", std::vector<std::string>{});
    r.failed_seeds = j.value("failed_seeds", std::vector<std::int64_t>{});
    return r;
}

TokenReport score_token(const std::string& token, BackendClient& backend, const ScoutConfig& config) {
    check_token(token);
    std::vector<std::int64_t> seeds = config.seeds;
    std::sort(seeds.begin(), seeds.end());
    if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end()) {
        throw std::invalid_argument("seed list contains duplicates");
    }
    if (seeds.size() < 2) {
        throw std::invalid_argument(fmt::format("need at least 2 seeds, got {}", seeds.size()));
    }
    if (config.ssim_size < 8) {
        throw std::invalid_argument("ssim_size must be at least 8");
    }
    const std::string prompt = render_template(config.prompt_template, token);
    auto generations = generate_all(prompt, seeds, backend, config);

    TokenReport report;
    report.token = token;
    report.ssim_size = config.ssim_size;
    std::vector<ImageBuffer> lumas;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto& g = generations[i];
        if (!g.image) {
            if (!config.tolerate_failures) {
                throw std::runtime_error(
                    fmt::format("token '{}': generation for seed {} failed: {}", token, seeds[i], g.error));
            }
            report.failed_seeds.push_back(seeds[i]);
            continue;
        }
        ImageBuffer img = quantize8(*g.image);
        if (config.out_dir) {
            const std::string rel = fmt::format("{}/seed_{}.png", token, seeds[i]);
            std::filesystem::create_directories(*config.out_dir / token);
            write_png(*config.out_dir / rel, img, 8);
            report.images.push_back(rel);
        }
        report.seeds.push_back(seeds[i]);
        lumas.push_back(resize(to_luma(img), config.ssim_size, config.ssim_size));
    }
    const std::size_t n = lumas.size();
    if (n < 2) {
        throw std::runtime_error(
            fmt::format("token '{}': only {} of {} generations succeeded", token, n, seeds.size()));
    }

    report.pairwise_ssim.assign(n, std::vector<double>(n, 1.0));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = ssim(lumas[i], lumas[j]);
            report.pairwise_ssim[i][j] = report.pairwise_ssim[j][i] = s;
            total += s;
        }
    }
    report.variability = 1.0 - total / static_cast<double>(n * (n - 1) / 2);
    return report;
}

nlohmann::json leaderboard_json(const ScoutResult& result, const ScoutConfig& config) {
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& r : result.ranked) ranked.push_back(to_json(r));
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : result.failures) failures.push_back({{"token", f.token}, {"error", f.error}});
    return {{"template", config.prompt_template},
            {"seeds", config.seeds},
            {"ssim_size", config.ssim_size},
            {"ranked", ranked},
            {"failures", failures}};
}

ScoutResult rank_tokens(const std::vector<std::string>& candidates, BackendClient& backend,
                        const ScoutConfig& config) {
    if (candidates.empty()) {
        throw std::invalid_argument("no candidate tokens");
    }
    std::vector<std::string> tokens = candidates;
    std::sort(tokens.begin(), tokens.end());
    if (std::adjacent_find(tokens.begin(), tokens.end()) != tokens.end()) {
        throw std::invalid_argument("candidate list contains duplicates");
    }
    for (const auto& t : tokens) check_token(t);

    ScoutResult result;
    for (const auto& token : tokens) {
        try {
            result.ranked.push_back(score_token(token, backend, config));
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception& e) {
            result.failures.push_back({token, e.what()});
        }
    }
    if (result.ranked.empty()) {
        throw std::runtime_error(fmt::format("all {} candidate tokens failed", tokens.size()));
    }
    std::stable_sort(result.ranked.begin(), result.ranked.end(), [](const TokenReport& a, const TokenReport& b) {
        if (a.variability != b.variability) return a.variability > b.variability;
        return a.token < b.token;
    });
    if (config.out_dir) {
        std::filesystem::create_directories(*config.out_dir);
        const auto path = *config.out_dir / "leaderboard.json";
        const auto tmp = std::filesystem::path(path.string() + ".tmp");
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            f << leaderboard_json(result, config).dump(2) << '\n';
            if (!f) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
        }
        std::filesystem::rename(tmp, path);
    }
    return result;
}

} // namespace twostage
