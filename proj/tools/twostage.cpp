// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: generate, scout, blur, lora-report, evaluate,
// fit-niqe, verify, replay and serve-mock.

#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "twostage/distance_transform.hpp"
#include "twostage/http_backend.hpp"
#include "twostage/lora_algebra.hpp"
#include "twostage/metrics.hpp"
#include "twostage/mock_backend.hpp"
#include "twostage/pipeline.hpp"
#include "twostage/png_io.hpp"
#include "twostage/token_scout.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace twostage;

namespace {

std::unique_ptr<BackendClient> make_backend(const std::string& spec) {
    if (spec == "mock") {
        return std::make_unique<MockBackend>();
    }
    return std::make_unique<HttpBackendClient>(spec);
}

std::vector<std::int64_t> parse_seeds(const std::string& text) {
    std::vector<std::int64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const long long v = std::stoll(item, &used);
        if (used != item.size()) throw std::invalid_argument(fmt::format("bad seed '{}'", item));
        seeds.push_back(v);
    }
    return seeds;
}

std::vector<std::string> read_tokens(const std::string& source) {
    if (source == "default") {
        return default_candidates();
    }
    std::ifstream f(source);
    if (!f) throw std::runtime_error(fmt::format("cannot open token file {}", source));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t\r");
        out.push_back(line.substr(b, e - b + 1));
    }
    return out;
}

// Expands directories to their *.png files (sorted); files pass through.
std::vector<fs::path> expand_images(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(in)) {
                if (e.is_regular_file() && e.path().extension() == ".png") found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.emplace_back(in);
        }
    }
    return out;
}

ImageBuffer crop_to_mask(const ImageBuffer& img, const Mask& mask) {
    if (mask.width() != img.width() || mask.height() != img.height()) {
        throw ShapeError("evaluation mask does not match image size");
    }
    const auto box = bounding_box(mask);
    if (!box) throw EmptyMaskError();
    const PixelRect r = rasterize(*box, img.width(), img.height());
    ImageBuffer out(r.x1 - r.x0, r.y1 - r.y0, img.channels());
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            for (int c = 0; c < img.channels(); ++c) out.at(x - r.x0, y - r.y0, c) = img.at(x, y, c);
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"twostage: two-stage subject personalization toolkit"};
    app.require_subcommand(1);

    // generate
    PipelineJob job;
    std::string gen_backend = "mock";
    std::string gen_out;
    std::string blur_mode = "decay";
    std::string normalization = "diagonal";
    auto* gen = app.add_subcommand("generate", "Run the two-stage pipeline for one job");
    gen->add_option("--prompt", job.prompt, "Prompt naming the subject")->required();
    gen->add_option("--subject", job.subject_name, "Subject name as it appears in the prompt")->required();
    gen->add_option("--class-label", job.class_label, "Class label used for stage 1 and segmentation")->required();
    gen->add_option("--token", job.placeholder_token, "Placeholder token the LoRA was trained on")->required();
    gen->add_option("--lora", job.lora_path, "LoRA safetensors file")->required();
    gen->add_option("--lora-ref", job.lora_ref, "Reference passed to the backend (default: LoRA file stem)");
    gen->add_option("--seed", job.seed, "Generation seed")->capture_default_str();
    gen->add_option("--width", job.width)->capture_default_str();
    gen->add_option("--height", job.height)->capture_default_str();
    gen->add_option("--backend", gen_backend, "\"mock\" or http://host:port")->capture_default_str();
    gen->add_option("--blur-mode", blur_mode, "decay | gaussian | gaussian_full")->capture_default_str();
    gen->add_option("--kernel-size", job.blur.kernel_size)->capture_default_str();
    gen->add_option("--sigma", job.blur.sigma)->capture_default_str();
    gen->add_option("--lambda", job.blur.lambda)->capture_default_str();
    gen->add_option("--normalization", normalization, "diagonal | pixels")->capture_default_str();
    gen->add_option("--tau", job.segmentation.tau)->capture_default_str();
    gen->add_option("--lambda-sel", job.segmentation.lambda_sel)->capture_default_str();
    gen->add_option("--dilate", job.segmentation.dilate_radius)->capture_default_str();
    gen->add_option("--strength", job.img2img_strength)->capture_default_str();
    gen->add_option("--out", gen_out, "Job output directory")->required();

    // scout
    ScoutConfig scout_cfg;
    std::string scout_tokens = "default";
    std::string scout_seeds = "0,1,2,3";
    std::string scout_backend = "mock";
    std::string scout_out;
    auto* scout = app.add_subcommand("scout", "Rank placeholder tokens by cross-seed variability");
    scout->add_option("--tokens", scout_tokens, "Token file (one per line) or \"default\"")->capture_default_str();
    scout->add_option("--seeds", scout_seeds, "Comma-separated seeds")->capture_default_str();
    scout->add_option("--template", scout_cfg.prompt_template)->capture_default_str();
    scout->add_option("--backend", scout_backend)->capture_default_str();
    scout->add_option("--width", scout_cfg.width)->capture_default_str();
    scout->add_option("--height", scout_cfg.height)->capture_default_str();
    scout->add_option("--ssim-size", scout_cfg.ssim_size)->capture_default_str();
    scout->add_option("--max-in-flight", scout_cfg.max_in_flight)->capture_default_str();
    scout->add_flag("--tolerate-failures", scout_cfg.tolerate_failures, "Skip failed seeds");
    scout->add_option("--out", scout_out, "Output directory for images and leaderboard.json")->required();

    // blur
    std::string blur_in, blur_mask, blur_out, blur_kind = "decay", blur_norm = "diagonal";
    int blur_kernel = 151, blur_depth = 8;
    double blur_sigma = 100.0, blur_lambda = 5.0;
    auto* blur = app.add_subcommand("blur", "Blur an image under a mask");
    blur->add_option("--in", blur_in)->required();
    blur->add_option("--mask", blur_mask, "Mask PNG (required for gaussian and decay)");
    blur->add_option("--out", blur_out)->required();
    blur->add_option("--mode", blur_kind, "decay | gaussian | gaussian_full")->capture_default_str();
    blur->add_option("--kernel-size", blur_kernel)->capture_default_str();
    blur->add_option("--sigma", blur_sigma)->capture_default_str();
    blur->add_option("--lambda", blur_lambda)->capture_default_str();
    blur->add_option("--normalization", blur_norm)->capture_default_str();
    blur->add_option("--bit-depth", blur_depth, "8 or 16")->capture_default_str();

    // lora-report
    std::string report_lora;
    double kappa = 1.0, rel_tol = 1e-6;
    bool alpha_required = false;
    auto* report = app.add_subcommand("lora-report", "Per-delta norms and shift bounds as JSON lines");
    report->add_option("file,--lora", report_lora, "LoRA safetensors file")->required();
    report->add_option("--kappa", kappa, "Lipschitz constant for the KL bound")->capture_default_str();
    report->add_option("--rank-tol", rel_tol, "Relative singular value tolerance")->capture_default_str();
    report->add_flag("--require-alpha", alpha_required, "Fail when a pair has no alpha tensor");

    // evaluate
    std::vector<std::string> eval_refs, eval_gens;
    std::string eval_text, eval_backend = "mock", eval_pristine, eval_mask;
    auto* eval = app.add_subcommand("evaluate", "Embedding similarities and no-reference quality features");
    eval->add_option("--refs", eval_refs, "Reference images or directories");
    eval->add_option("--gens", eval_gens, "Generated images or directories")->required();
    eval->add_option("--text", eval_text, "Prompt for the text-image similarity");
    eval->add_option("--backend", eval_backend)->capture_default_str();
    eval->add_option("--pristine", eval_pristine, "Pristine NIQE model JSON");
    eval->add_option("--mask", eval_mask, "Crop generated images to this mask's bounding box");

    // fit-niqe
    std::vector<std::string> fit_inputs;
    std::string fit_out;
    int fit_patch = 96;
    auto* fit = app.add_subcommand("fit-niqe", "Fit a pristine NIQE model from images");
    fit->add_option("--images", fit_inputs)->required();
    fit->add_option("--patch", fit_patch)->capture_default_str();
    fit->add_option("--out", fit_out)->required();

    // verify / replay
    std::string manifest_path, replay_backend = "mock", replay_dir;
    auto* verify = app.add_subcommand("verify", "Check manifest artifacts against their hashes");
    verify->add_option("manifest", manifest_path)->required();
    auto* replay = app.add_subcommand("replay", "Re-run a manifest's job and compare hashes");
    replay->add_option("manifest", manifest_path)->required();
    replay->add_option("--backend", replay_backend)->capture_default_str();
    replay->add_option("--scratch", replay_dir, "Scratch output directory")->required();

    // serve-mock
    std::string host = "127.0.0.1";
    int port = 8765;
    auto* serve = app.add_subcommand("serve-mock", "Serve the mock backend over HTTP");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            job.blur.mode = parse_blur_mode(blur_mode);
            job.blur.normalization = parse_decay_normalization(normalization);
            auto backend = make_backend(gen_backend);
            const Manifest m = run_job(job, *backend, gen_out);
            std::cout << to_json(m).dump(2) << '\n';
        } else if (*scout) {
            scout_cfg.seeds = parse_seeds(scout_seeds);
            scout_cfg.out_dir = fs::path(scout_out);
            auto backend = make_backend(scout_backend);
            const ScoutResult res = rank_tokens(read_tokens(scout_tokens), *backend, scout_cfg);
            for (const auto& r : res.ranked) {
                std::cout << fmt::format("{:<8} {:.6f}\n", r.token, r.variability);
            }
            for (const auto& f : res.failures) {
                std::cerr << fmt::format("failed: {}: {}\n", f.token, f.error);
            }
        } else if (*blur) {
            const ImageBuffer img = read_png(blur_in);
            const Kernel kernel = gaussian_kernel(blur_kernel, blur_sigma);
            const BlurMode mode = parse_blur_mode(blur_kind);
            ImageBuffer out;
            if (mode == BlurMode::gaussian_full) {
                out = gaussian_blur(img, kernel);
            } else {
                if (blur_mask.empty()) throw std::invalid_argument("--mask is required for this mode");
                const Mask mask = read_mask_png(blur_mask);
                out = mode == BlurMode::decay
                          ? decay_blur(img, mask, kernel, blur_lambda, parse_decay_normalization(blur_norm))
                          : masked_blur(img, mask, kernel);
            }
            write_png(blur_out, out, blur_depth);
        } else if (*report) {
            const TensorStore store = read_store(report_lora);
            NamingConfig naming;
            if (alpha_required) naming.alpha_policy = AlphaPolicy::required;
            const LoraDiscovery found = discover_lora_pairs(store, naming);
            for (const auto& d : found.deltas) {
                const BoundReport b = shift_bound(d, kappa);
                json line = {{"name", d.base_name},
                             {"shape", {d.out_dim(), d.in_dim()}},
                             {"rank", d.rank},
                             {"alpha", d.alpha},
                             {"rank_ok", verify_rank(d, rel_tol)},
                             {"delta_frobenius", b.delta_frobenius},
                             {"factor_bound", b.factor_bound},
                             {"kappa", b.kappa},
                             {"kl_bound", b.kl_bound}};
                std::cout << line.dump() << '\n';
            }
            for (const auto& u : found.unmatched) {
                std::cout << json{{"unmatched", u.tensor}, {"reason", u.reason}}.dump() << '\n';
            }
        } else if (*eval) {
            auto backend = make_backend(eval_backend);
            std::optional<Mask> mask;
            if (!eval_mask.empty()) mask = read_mask_png(eval_mask);
            auto load = [&](const fs::path& p, bool crop) {
                ImageBuffer img = read_png(p);
                return crop && mask ? crop_to_mask(img, *mask) : img;
            };
            json out = {{"subject_crop", mask.has_value()}};
            std::vector<ImageBuffer> gens;
            for (const auto& p : expand_images(eval_gens)) gens.push_back(load(p, true));
            if (gens.empty()) throw std::invalid_argument("no generated images");
            std::vector<EmbeddingVector> gen_dino, gen_clip;
            for (const auto& g : gens) {
                gen_dino.push_back(backend->embed({g, std::nullopt, EmbeddingSource::dino}));
                gen_clip.push_back(backend->embed({g, std::nullopt, EmbeddingSource::clip_image}));
            }
            if (!eval_refs.empty()) {
                std::vector<EmbeddingVector> ref_dino, ref_clip;
                for (const auto& p : expand_images(eval_refs)) {
                    const ImageBuffer r = load(p, false);
                    ref_dino.push_back(backend->embed({r, std::nullopt, EmbeddingSource::dino}));
                    ref_clip.push_back(backend->embed({r, std::nullopt, EmbeddingSource::clip_image}));
                }
                out["dino"] = subject_similarity(ref_dino, gen_dino);
                out["clip_i"] = subject_similarity(ref_clip, gen_clip);
            }
            if (!eval_text.empty()) {
                const EmbeddingVector t = backend->embed({std::nullopt, eval_text, EmbeddingSource::clip_text});
                std::vector<double> sims;
                for (const auto& g : gen_clip) sims.push_back(cosine_similarity(t.values, g.values));
                out["clip_t"] = mean_of(sims);
            }
            std::vector<double> niqe;
            json brisque = json::array();
            std::optional<NiqeModel> pristine;
            if (!eval_pristine.empty()) pristine = load_niqe_model(eval_pristine);
            for (const auto& g : gens) {
                brisque.push_back(brisque_features(to_luma(g)));
                if (pristine) niqe.push_back(niqe_score(g, *pristine));
            }
            out["brisque_features"] = brisque;
            if (pristine) {
                out["niqe"] = niqe;
                out["niqe_mean"] = mean_of(niqe);
            }
            std::cout << out.dump(2) << '\n';
        } else if (*fit) {
            std::vector<std::vector<double>> rows;
            for (const auto& p : expand_images(fit_inputs)) {
                auto f = niqe_patch_features(read_png(p), fit_patch);
                rows.insert(rows.end(), f.begin(), f.end());
            }
            save_niqe_model(fit_mvg(rows), fit_out);
            std::cout << fmt::format("fitted on {} patches\n", rows.size());
        } else if (*verify) {
            const auto problems = verify_manifest(manifest_path);
            for (const auto& p : problems) std::cout << p << '\n';
            if (!problems.empty()) return 1;
            std::cout << "ok\n";
        } else if (*replay) {
            auto backend = make_backend(replay_backend);
            const ReplayResult r = replay_manifest(manifest_path, *backend, replay_dir);
            std::cout << fmt::format("final {}; calls {}\n", r.final_matches ? "match" : "DIFFER",
                                     r.calls_match ? "match" : "DIFFER");
            if (!r.final_matches || !r.calls_match) return 1;
        } else if (*serve) {
            MockBackend backend;
            httplib::Server server;
            register_backend_routes(server, backend);
            std::cerr << fmt::format("mock backend on http://{}:{}\n", host, port);
            if (!server.listen(host, port)) {
                throw std::runtime_error(fmt::format("cannot listen on {}:{}", host, port));
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
