// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "twostage/blur.hpp"
#include "twostage/metrics.hpp"

namespace twostage {

namespace {

constexpr double kShapeMin = 0.2;
constexpr double kShapeMax = 10.0;
constexpr double kShapeStep = 0.001;

template <typename Ratio>
double argmin_shape(double target, Ratio ratio) {
    double best_shape = kShapeMin;
    double best_err = std::numeric_limits<double>::infinity();
    const int steps = static_cast<int>(std::lround((kShapeMax - kShapeMin) / kShapeStep));
    for (int i = 0; i <= steps; ++i) {
        const double g = kShapeMin + i * kShapeStep;
        const double err = std::abs(ratio(g) - target);
        if (err < best_err) {
            best_err = err;
            best_shape = g;
        }
    }
    return best_shape;
}

// Products of each MSCN coefficient with its neighbour at (dx, dy).
std::vector<float> neighbour_products(const ImageBuffer& m, int dx, int dy) {
    std::vector<float> out;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            const int nx = x + dx;
            const int ny = y + dy;
            if (nx >= 0 && nx < m.width() && ny < m.height()) {
                out.push_back(m.at(x, y) * m.at(nx, ny));
            }
        }
    }
    return out;
}

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int w, int h) {
    ImageBuffer out(w, h, img.channels());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
            }
        }
    }
    return out;
}

ImageBuffer half_scale(const ImageBuffer& img) {
    return resize(img, std::max(1, img.width() / 2), std::max(1, img.height() / 2));
}

} // namespace

ImageBuffer mscn(const ImageBuffer& img, const MscnParams& params) {
    if (img.channels() != 1) {
        throw MetricError("mscn expects a single-channel image");
    }
    const Kernel kernel = gaussian_kernel(params.window, params.sigma);
    const int r = kernel.radius();
    const int w = img.width();
    const int h = img.height();
    ImageBuffer out(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Offsets relative to the centre sample: for a flat neighbourhood every
            // difference is exactly zero, so constant images map to exactly zero.
            const double centre = img.at(x, y);
            double m1 = 0.0;
            double m2 = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const int sy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    const int sx = std::clamp(x + dx, 0, w - 1);
                    const double d = img.at(sx, sy) - centre;
                    const double wgt = kernel.weight(dx, dy);
                    m1 += wgt * d;
                    m2 += wgt * d * d;
                }
            }
            const double sigma = std::sqrt(std::max(0.0, m2 - m1 * m1));
            out.at(x, y) = static_cast<float>(-m1 / (sigma + params.c));
        }
    }
    return out;
}

GgdFit fit_ggd(std::span<const float> samples) {
    double sq = 0.0;
    double abs_sum = 0.0;
    for (float s : samples) {
        sq += static_cast<double>(s) * s;
        abs_sum += std::abs(static_cast<double>(s));
    }
    if (samples.empty() || abs_sum == 0.0) {
        return {};
    }
    const double n = static_cast<double>(samples.size());
    const double variance = sq / n;
    const double mean_abs = abs_sum / n;
    const double rho = variance / (mean_abs * mean_abs);
    const double shape = argmin_shape(rho, [](double g) {
        return std::tgamma(1.0 / g) * std::tgamma(3.0 / g) / std::pow(std::tgamma(2.0 / g), 2);
    });
    return {shape, variance};
}

AggdFit fit_aggd(std::span<const float> samples) {
    double left_sq = 0, right_sq = 0, abs_sum = 0, sq = 0;
    std::size_t left_n = 0, right_n = 0;
    for (float s : samples) {
        const double v = s;
        if (v < 0) {
            left_sq += v * v;
            ++left_n;
        } else if (v > 0) {
            right_sq += v * v;
            ++right_n;
        }
        abs_sum += std::abs(v);
        sq += v * v;
    }
    if (samples.empty() || sq == 0.0) {
        return {};
    }
    const double n = static_cast<double>(samples.size());
    const double left_std = left_n ? std::sqrt(left_sq / static_cast<double>(left_n)) : 0.0;
    const double right_std = right_n ? std::sqrt(right_sq / static_cast<double>(right_n)) : 0.0;
    const double eps = 1e-12;
    const double gamma_hat = std::max(left_std, eps) / std::max(right_std, eps);
    const double r_hat = std::pow(abs_sum / n, 2) / (sq / n);
    const double r_hat_norm =
        r_hat * (std::pow(gamma_hat, 3) + 1) * (gamma_hat + 1) / std::pow(gamma_hat * gamma_hat + 1, 2);
    const double shape = argmin_shape(r_hat_norm, [](double g) {
        return std::pow(std::tgamma(2.0 / g), 2) / (std::tgamma(1.0 / g) * std::tgamma(3.0 / g));
    });
    const double mean = (right_std - left_std) * (std::tgamma(2.0 / shape) / std::tgamma(1.0 / shape)) *
                        std::sqrt(std::tgamma(1.0 / shape) / std::tgamma(3.0 / shape));
    return {shape, mean, left_std * left_std, right_std * right_std};
}

std::vector<double> nss_features(const ImageBuffer& field) {
    std::vector<double> features;
    const GgdFit ggd = fit_ggd(field.data());
    features.push_back(ggd.shape);
    features.push_back(ggd.variance);
    constexpr int kShifts[4][2] = {{1, 0}, {0, 1}, {1, 1}, {-1, 1}};
    for (const auto& shift : kShifts) {
        const auto products = neighbour_products(field, shift[0], shift[1]);
        const AggdFit a = fit_aggd(products);
        features.insert(features.end(), {a.shape, a.mean, a.left_variance, a.right_variance});
    }
    return features;
}

std::vector<double> brisque_features(const ImageBuffer& img) {
    const ImageBuffer luma = to_luma(img);
    std::vector<double> features = nss_features(mscn(luma));
    const auto half = nss_features(mscn(half_scale(luma)));
    features.insert(features.end(), half.begin(), half.end());
    return features;
}

std::vector<std::vector<double>> niqe_patch_features(const ImageBuffer& img, int patch) {
    if (patch < 2) {
        throw MetricError("NIQE patch size must be at least 2");
    }
    const ImageBuffer luma = to_luma(img);
    const ImageBuffer full = mscn(luma);
    const ImageBuffer half = mscn(half_scale(luma));
    const int bx = std::max(1, luma.width() / patch);
    const int by = std::max(1, luma.height() / patch);
    const int pw = luma.width() >= patch ? patch : luma.width();
    const int ph = luma.height() >= patch ? patch : luma.height();

    std::vector<std::vector<double>> rows;
    for (int j = 0; j < by; ++j) {
        for (int i = 0; i < bx; ++i) {
            auto f = nss_features(crop(full, i * pw, j * ph, pw, ph));
            const int hx = std::min(i * pw / 2, half.width() - 1);
            const int hy = std::min(j * ph / 2, half.height() - 1);
            const int hw = std::max(1, std::min(pw / 2, half.width() - hx));
            const int hh = std::max(1, std::min(ph / 2, half.height() - hy));
            const auto g = nss_features(crop(half, hx, hy, hw, hh));
            f.insert(f.end(), g.begin(), g.end());
            rows.push_back(std::move(f));
        }
    }
    return rows;
}

NiqeModel fit_mvg(std::span<const std::vector<double>> features) {
    if (features.empty()) {
        throw MetricError("cannot fit a Gaussian to zero feature vectors");
    }
    const std::size_t dim = features.front().size();
    NiqeModel model;
    model.mean.assign(dim, 0.0);
    for (const auto& f : features) {
        if (f.size() != dim) {
            throw MetricError("feature vectors differ in length");
        }
        for (std::size_t k = 0; k < dim; ++k) model.mean[k] += f[k];
    }
    const double n = static_cast<double>(features.size());
    for (double& m : model.mean) m /= n;
    model.covariance.assign(dim * dim, 0.0);
    for (const auto& f : features) {
        for (std::size_t a = 0; a < dim; ++a) {
            for (std::size_t b = 0; b < dim; ++b) {
                model.covariance[a * dim + b] += (f[a] - model.mean[a]) * (f[b] - model.mean[b]);
            }
        }
    }
    const double denom = features.size() > 1 ? n - 1.0 : 1.0;
    for (double& c : model.covariance) c /= denom;
    return model;
}

double niqe_distance(const NiqeModel& test, const NiqeModel& pristine) {
    const std::size_t dim = test.dim();
    if (pristine.dim() != dim || test.covariance.size() != dim * dim || pristine.covariance.size() != dim * dim) {
        throw MetricError(fmt::format("NIQE model dimensions differ: {} vs {}", dim, pristine.dim()));
    }
    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::VectorXd diff(n);
    Eigen::MatrixXd pooled(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        diff(a) = test.mean[static_cast<std::size_t>(a)] - pristine.mean[static_cast<std::size_t>(a)];
        for (Eigen::Index b = 0; b < n; ++b) {
            const std::size_t i = static_cast<std::size_t>(a) * dim + static_cast<std::size_t>(b);
            pooled(a, b) = 0.5 * (test.covariance[i] + pristine.covariance[i]);
        }
    }
    Eigen::VectorXd solved;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(pooled);
    if (lu.isInvertible()) {
        solved = lu.solve(diff);
    } else {
        solved = pooled.completeOrthogonalDecomposition().pseudoInverse() * diff;
    }
    return std::sqrt(std::max(0.0, diff.dot(solved)));
}

double niqe_score(const ImageBuffer& img, const NiqeModel& pristine, int patch) {
    const auto rows = niqe_patch_features(img, patch);
    return niqe_distance(fit_mvg(rows), pristine);
}

NiqeModel load_niqe_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot open NIQE model '{}'", path.string()));
    }
    const auto doc = nlohmann::json::parse(in);
    NiqeModel model;
    model.mean = doc.at("mean").get<std::vector<double>>();
    const auto rows = doc.at("covariance").get<std::vector<std::vector<double>>>();
    if (rows.size() != model.mean.size()) {
        throw MetricError("NIQE covariance is not dim x dim");
    }
    for (const auto& row : rows) {
        if (row.size() != model.mean.size()) {
            throw MetricError("NIQE covariance is not dim x dim");
        }
        model.covariance.insert(model.covariance.end(), row.begin(), row.end());
    }
    return model;
}

void save_niqe_model(const NiqeModel& model, const std::filesystem::path& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t a = 0; a < model.dim(); ++a) {
        rows.push_back(std::vector<double>(model.covariance.begin() + static_cast<std::ptrdiff_t>(a * model.dim()),
                                           model.covariance.begin() + static_cast<std::ptrdiff_t>((a + 1) * model.dim())));
    }
    std::ofstream out(path);
    out << nlohmann::json{{"mean", model.mean}, {"covariance", rows}}.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write NIQE model '{}'", path.string()));
    }
}

} // namespace twostage
