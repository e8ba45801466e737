#include "nbv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nbv/fitter.hpp"

namespace nbv {

AffineExtractor::AffineExtractor(int in_channels, int out_channels)
    : c_in_(in_channels), d_out_(out_channels),
      weight_(static_cast<std::size_t>(out_channels) * in_channels, 0.0),
      bias_(static_cast<std::size_t>(out_channels), 0.0) {
    if (in_channels <= 0 || out_channels <= 0)
        throw ConfigError("AffineExtractor: channel counts must be positive");
}

AffineExtractor AffineExtractor::identity(int channels) {
    AffineExtractor e(channels, channels);
    for (int j = 0; j < channels; ++j)
        e.weight_[static_cast<std::size_t>(j) * channels + j] = 1.0;
    return e;
}

FeatureMap AffineExtractor::forward(const FeatureMap& observation) const {
    if (observation.channels != c_in_)
        throw ShapeError("AffineExtractor: observation channel mismatch");
    FeatureMap out;
    out.height = observation.height;
    out.width = observation.width;
    out.channels = d_out_;
    out.data.resize(static_cast<std::size_t>(out.pixels()) * d_out_);
    for (int p = 0; p < observation.pixels(); ++p) {
        const double* in = observation.pixel(p);
        double* o = out.pixel(p);
        for (int j = 0; j < d_out_; ++j) {
            double acc = bias_[static_cast<std::size_t>(j)];
            const double* w = weight_.data() + static_cast<std::size_t>(j) * c_in_;
            for (int c = 0; c < c_in_; ++c) acc += w[c] * in[c];
            o[j] = acc;
        }
    }
    return out;
}

std::vector<double> AffineExtractor::params() const {
    std::vector<double> p = weight_;
    p.insert(p.end(), bias_.begin(), bias_.end());
    return p;
}

void AffineExtractor::set_params(const std::vector<double>& p) {
    if (p.size() != weight_.size() + bias_.size())
        throw ShapeError("AffineExtractor: parameter size mismatch");
    std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(weight_.size()), weight_.begin());
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(weight_.size()), p.end(), bias_.begin());
}

std::vector<double> AffineExtractor::param_gradient(const FeatureMap& observation,
                                                    const std::vector<double>& d_output) const {
    if (d_output.size() != static_cast<std::size_t>(observation.pixels()) * d_out_)
        throw ShapeError("AffineExtractor: output gradient size mismatch");
    std::vector<double> grad(weight_.size() + bias_.size(), 0.0);
    double* dw = grad.data();
    double* db = grad.data() + weight_.size();
    for (int p = 0; p < observation.pixels(); ++p) {
        const double* in = observation.pixel(p);
        const double* dout = d_output.data() + static_cast<std::size_t>(p) * d_out_;
        for (int j = 0; j < d_out_; ++j) {
            double g = dout[j];
            if (g == 0.0) continue;
            double* row = dw + static_cast<std::size_t>(j) * c_in_;
            for (int c = 0; c < c_in_; ++c) row[c] += g * in[c];
            db[j] += g;
        }
    }
    return grad;
}

TrainBatchScene prepare_scene(const TrainScene& scene, const BodyTemplate& tmpl,
                              const KernelFeatureBank& bank, const OrientationBins& bins,
                              const RenderParams& params, double mask_tau) {
    PosedBody posed = pose_kernels(tmpl, scene.theta, scene.beta);
    // alphas do not depend on the features; render with zeros
    std::vector<double> zeros(static_cast<std::size_t>(tmpl.num_kernels) * bank.feature_dim, 0.0);
    RenderOutput render =
        render_feature_map(posed, zeros, bank.feature_dim, scene.camera, params);
    TrainBatchScene out;
    out.contributions = std::move(render.contributions);
    out.mask = foreground_mask(render, mask_tau);
    out.limb_weights.resize(posed.limb_orientations.size());
    for (std::size_t l = 0; l < posed.limb_orientations.size(); ++l) {
        Vec3d dir_cam = scene.camera.rotation * posed.limb_orientations[l];
        out.limb_weights[l] = orientation_weights<double>(dir_cam, bins);
    }
    return out;
}

void BankAccumulator::init(const KernelFeatureBank& bank) {
    num_kernels = bank.num_kernels;
    num_orientations = bank.num_orientations;
    feature_dim = bank.feature_dim;
    numer.assign(static_cast<std::size_t>(num_kernels) * num_orientations * feature_dim, 0.0);
    denom.assign(static_cast<std::size_t>(num_kernels) * num_orientations, 0.0);
}

void BankAccumulator::add(const TrainBatchScene& scene, const FeatureMap& features,
                          const std::vector<int>& kernel_limb) {
    if (features.channels != feature_dim) throw ShapeError("BankAccumulator: channel mismatch");
    for (const Contribution& c : scene.contributions) {
        const double* f = features.pixel(c.pixel);
        const std::vector<double>& w =
            scene.limb_weights[static_cast<std::size_t>(kernel_limb[static_cast<std::size_t>(c.kernel)])];
        for (int o = 0; o < num_orientations; ++o) {
            double gamma = c.alpha * w[static_cast<std::size_t>(o)];
            if (gamma == 0.0) continue;
            std::size_t ko = static_cast<std::size_t>(c.kernel) * num_orientations + o;
            denom[ko] += gamma;
            double* n = numer.data() + ko * feature_dim;
            for (int j = 0; j < feature_dim; ++j) n[j] += gamma * f[j];
        }
    }
}

void mle_update_bank(KernelFeatureBank& bank, const BankAccumulator& acc, double momentum) {
    if (acc.num_kernels != bank.num_kernels || acc.num_orientations != bank.num_orientations ||
        acc.feature_dim != bank.feature_dim)
        throw ShapeError("mle_update_bank: accumulator shape mismatch");
    const int d = bank.feature_dim;
    for (int k = 0; k < bank.num_kernels; ++k)
        for (int o = 0; o < bank.num_orientations; ++o) {
            std::size_t ko = static_cast<std::size_t>(k) * bank.num_orientations + o;
            double den = acc.denom[ko];
            if (den == 0.0) continue;  // zero-support entries untouched
            double* phi = bank.feature(k, o);
            const double* n = acc.numer.data() + ko * d;
            // blend unit directions, not raw magnitudes, so momentum is a pure
            // angular step independent of observed feature scale
            double mean2 = 0.0;
            for (int j = 0; j < d; ++j) mean2 += (n[j] / den) * (n[j] / den);
            if (mean2 < 1e-30) continue;
            double mean_inv = 1.0 / std::sqrt(mean2);
            double norm2 = 0.0;
            for (int j = 0; j < d; ++j) {
                phi[j] = momentum * phi[j] + (1.0 - momentum) * (n[j] / den) * mean_inv;
                norm2 += phi[j] * phi[j];
            }
            if (norm2 < 1e-30) continue;  // degenerate blend; leave as-is
            double inv = 1.0 / std::sqrt(norm2);
            for (int j = 0; j < d; ++j) phi[j] *= inv;
        }
}

BackgroundModel fit_background(const std::vector<const FeatureMap*>& maps,
                               const std::vector<const std::vector<uint8_t>*>& masks,
                               double sigma_min) {
    if (maps.empty() || maps.size() != masks.size())
        throw ShapeError("fit_background: map/mask count mismatch");
    const int d = maps[0]->channels;
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    std::size_t count = 0;
    for (std::size_t s = 0; s < maps.size(); ++s) {
        const FeatureMap& m = *maps[s];
        const std::vector<uint8_t>& mask = *masks[s];
        for (int p = 0; p < m.pixels(); ++p) {
            if (mask[static_cast<std::size_t>(p)]) continue;
            const double* f = m.pixel(p);
            for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += f[j];
            ++count;
        }
    }
    if (count == 0) throw ValidationError("fit_background: no background pixels");
    for (double& v : mean) v /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t s = 0; s < maps.size(); ++s) {
        const FeatureMap& m = *maps[s];
        const std::vector<uint8_t>& mask = *masks[s];
        for (int p = 0; p < m.pixels(); ++p) {
            if (mask[static_cast<std::size_t>(p)]) continue;
            const double* f = m.pixel(p);
            for (int j = 0; j < d; ++j) {
                double diff = f[j] - mean[static_cast<std::size_t>(j)];
                var += diff * diff;
            }
        }
    }
    var /= static_cast<double>(count) * d;  // pooled = RMS of per-channel stds
    BackgroundModel bg;
    bg.mean = std::move(mean);
    bg.sigma = std::max(std::sqrt(var), sigma_min);
    return bg;
}

namespace {

double squared_distance(const double* a, const double* b, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return acc;
}

// Accumulates one ordered pair into the loss and (optionally) the gradient.
void add_pair(const std::vector<double>& features, int d, int a, int b, double inv_count,
              double& loss, std::vector<double>* grad) {
    const double* fa = features.data() + static_cast<std::size_t>(a) * d;
    const double* fb = features.data() + static_cast<std::size_t>(b) * d;
    loss -= inv_count * squared_distance(fa, fb, d);
    if (!grad) return;
    double* ga = grad->data() + static_cast<std::size_t>(a) * d;
    double* gb = grad->data() + static_cast<std::size_t>(b) * d;
    for (int j = 0; j < d; ++j) {
        double g = -2.0 * inv_count * (fa[j] - fb[j]);
        ga[j] += g;
        gb[j] -= g;
    }
}

}  // namespace

ContrastiveResult contrastive_losses(const std::vector<double>& features, int num_pixels, int d,
                                     const std::vector<int>& fg_idx, const std::vector<int>& bg_idx,
                                     const std::vector<std::pair<int, int>>& fg_assign,
                                     uint64_t seed, int max_pairs, bool with_grad) {
    if (features.size() != static_cast<std::size_t>(num_pixels) * d)
        throw ShapeError("contrastive_losses: feature array size mismatch");
    if (fg_assign.size() != fg_idx.size())
        throw ShapeError("contrastive_losses: assignment count mismatch");
    ContrastiveResult out;
    if (with_grad) out.d_features.assign(features.size(), 0.0);
    std::vector<double>* grad = with_grad ? &out.d_features : nullptr;
    std::mt19937_64 rng(seed);
    const std::size_t cap = static_cast<std::size_t>(max_pairs);

    // L_FG: ordered distinct foreground pairs
    const std::size_t nf = fg_idx.size();
    std::size_t fg_total = nf >= 2 ? nf * (nf - 1) : 0;
    if (fg_total > 0) {
        std::size_t used = std::min(fg_total, cap);
        double inv = 1.0 / static_cast<double>(used);
        if (fg_total <= cap) {
            for (std::size_t a = 0; a < nf; ++a)
                for (std::size_t b = 0; b < nf; ++b)
                    if (a != b) add_pair(features, d, fg_idx[a], fg_idx[b], inv, out.l_fg, grad);
        } else {
            for (std::size_t s = 0; s < used; ++s) {
                std::size_t a = rng() % nf, b = rng() % nf;
                while (b == a) b = rng() % nf;
                add_pair(features, d, fg_idx[a], fg_idx[b], inv, out.l_fg, grad);
            }
        }
    }

    // L_3D: same kernel, different orientation
    int max_kernel = -1;
    for (const auto& [k, o] : fg_assign) max_kernel = std::max(max_kernel, k);
    std::vector<std::vector<std::size_t>> by_kernel(static_cast<std::size_t>(max_kernel + 1));
    for (std::size_t i = 0; i < fg_assign.size(); ++i)
        by_kernel[static_cast<std::size_t>(fg_assign[i].first)].push_back(i);
    std::vector<std::size_t> eligible;
    std::size_t three_d_total = 0;
    for (std::size_t k = 0; k < by_kernel.size(); ++k) {
        const auto& members = by_kernel[k];
        if (members.size() < 2) continue;
        std::size_t same_o = 0;
        for (std::size_t i = 0; i < members.size(); ++i)
            for (std::size_t j = 0; j < members.size(); ++j)
                if (fg_assign[members[i]].second == fg_assign[members[j]].second) ++same_o;
        std::size_t pairs = members.size() * members.size() - same_o;
        if (pairs > 0) {
            eligible.push_back(k);
            three_d_total += pairs;
        }
    }
    if (three_d_total > 0) {
        std::size_t used = std::min(three_d_total, cap);
        double inv = 1.0 / static_cast<double>(used);
        if (three_d_total <= cap) {
            for (std::size_t k : eligible) {
                const auto& members = by_kernel[k];
                for (std::size_t i : members)
                    for (std::size_t j : members)
                        if (fg_assign[i].second != fg_assign[j].second)
                            add_pair(features, d, fg_idx[i], fg_idx[j], inv, out.l_3d, grad);
            }
        } else {
            std::size_t drawn = 0;
            while (drawn < used) {
                const auto& members = by_kernel[eligible[rng() % eligible.size()]];
                std::size_t i = members[rng() % members.size()];
                std::size_t j = members[rng() % members.size()];
                if (fg_assign[i].second == fg_assign[j].second) continue;
                add_pair(features, d, fg_idx[i], fg_idx[j], inv, out.l_3d, grad);
                ++drawn;
            }
        }
    }

    // L_BG: foreground x background
    const std::size_t nb = bg_idx.size();
    std::size_t bg_total = nf * nb;
    if (bg_total > 0) {
        std::size_t used = std::min(bg_total, cap);
        double inv = 1.0 / static_cast<double>(used);
        if (bg_total <= cap) {
            for (std::size_t a = 0; a < nf; ++a)
                for (std::size_t b = 0; b < nb; ++b)
                    add_pair(features, d, fg_idx[a], bg_idx[b], inv, out.l_bg, grad);
        } else {
            for (std::size_t s = 0; s < used; ++s)
                add_pair(features, d, fg_idx[rng() % nf], bg_idx[rng() % nb], inv, out.l_bg, grad);
        }
    }

    out.total = out.l_fg + out.l_3d + out.l_bg;
    return out;
}

double image_nll_feature_grad(const FeatureMap& features, const std::vector<double>& rendered,
                              const std::vector<uint8_t>& mask, const BackgroundModel& bg,
                              double fg_sigma, RobustMode mode, std::vector<double>* d_features) {
    const int d = features.channels;
    const int n = features.pixels();
    if (rendered.size() != features.data.size() || mask.size() != static_cast<std::size_t>(n))
        throw ShapeError("image_nll_feature_grad: shape mismatch");
    if (d_features) d_features->assign(features.data.size(), 0.0);
    const double inv_n = 1.0 / n;
    const double inv_fg_var = 1.0 / (fg_sigma * fg_sigma);
    const double inv_bg_var = 1.0 / (bg.sigma * bg.sigma);
    double total = 0.0;
    for (int row = 0; row < features.height; ++row) {
        double row_sum = 0.0;
        for (int col = 0; col < features.width; ++col) {
            int p = row * features.width + col;
            const double* f = features.pixel(p);
            const double* phi = rendered.data() + static_cast<std::size_t>(p) * d;
            double bgn = background_nll(f, bg, d);
            double p_fg = 0.0;
            if (mask[static_cast<std::size_t>(p)]) {
                double fgn = foreground_nll<double>(f, phi, d, fg_sigma);
                row_sum += robust_pixel_nll<double>(fgn, bgn, mode);
                switch (mode) {
                    case RobustMode::kOff:
                        p_fg = 1.0;
                        break;
                    case RobustMode::kMap:
                        p_fg = fgn <= bgn ? 1.0 : 0.0;
                        break;
                    case RobustMode::kMarginal:
                        p_fg = fgn <= bgn ? 1.0 / (1.0 + std::exp(fgn - bgn))
                                          : std::exp(bgn - fgn) / (1.0 + std::exp(bgn - fgn));
                        break;
                }
            } else {
                row_sum += bgn;
            }
            if (d_features) {
                double* g = d_features->data() + static_cast<std::size_t>(p) * d;
                for (int j = 0; j < d; ++j)
                    g[j] = inv_n * (p_fg * (f[j] - phi[j]) * inv_fg_var +
                                    (1.0 - p_fg) * (f[j] - bg.mean[static_cast<std::size_t>(j)]) *
                                        inv_bg_var);
            }
        }
        total += row_sum;
    }
    return total * inv_n;
}

namespace {

// Dominant (kernel, orientation) per foreground pixel, from the recorded
// alphas and the static limb weights. Ties resolve to the lowest index.
void dominant_assignments(const TrainBatchScene& scene, const std::vector<int>& kernel_limb,
                          int width_unused, std::vector<int>& fg_pixels,
                          std::vector<std::pair<int, int>>& assign) {
    (void)width_unused;
    std::vector<double> best_alpha(scene.mask.size(), -1.0);
    std::vector<int> best_kernel(scene.mask.size(), -1);
    for (const Contribution& c : scene.contributions) {
        std::size_t p = static_cast<std::size_t>(c.pixel);
        if (c.alpha > best_alpha[p]) {
            best_alpha[p] = c.alpha;
            best_kernel[p] = c.kernel;
        }
    }
    fg_pixels.clear();
    assign.clear();
    for (std::size_t p = 0; p < scene.mask.size(); ++p) {
        if (!scene.mask[p] || best_kernel[p] < 0) continue;
        int limb = kernel_limb[static_cast<std::size_t>(best_kernel[p])];
        const std::vector<double>& w = scene.limb_weights[static_cast<std::size_t>(limb)];
        int best_o = 0;
        for (std::size_t o = 1; o < w.size(); ++o)
            if (w[o] > w[static_cast<std::size_t>(best_o)]) best_o = static_cast<int>(o);
        fg_pixels.push_back(static_cast<int>(p));
        assign.emplace_back(best_kernel[p], best_o);
    }
}

}  // namespace

TrainHistory train_loop(FeatureExtractor& extractor, const std::vector<TrainScene>& scenes,
                        const BodyTemplate& tmpl, KernelFeatureBank& bank,
                        BackgroundModel& background, const OrientationBins& bins,
                        const RenderParams& render_params, const TrainConfig& config) {
    if (scenes.empty()) throw ConfigError("train_loop: no training scenes");
    if (extractor.out_channels() != bank.feature_dim)
        throw ShapeError("train_loop: extractor output does not match the bank");
    const int d = bank.feature_dim;
    const std::size_t s_count = scenes.size();

    std::vector<TrainBatchScene> batch(s_count);
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < static_cast<int>(s_count); ++s)
        batch[static_cast<std::size_t>(s)] =
            prepare_scene(scenes[static_cast<std::size_t>(s)], tmpl, bank, bins, render_params,
                          config.mask_tau);

    // static per-scene index sets for the contrastive terms
    std::vector<std::vector<int>> scene_fg(s_count);
    std::vector<std::vector<std::pair<int, int>>> scene_assign(s_count);
    std::vector<int> pixel_offset(s_count, 0);
    int total_pixels = 0;
    for (std::size_t s = 0; s < s_count; ++s) {
        pixel_offset[s] = total_pixels;
        total_pixels += scenes[s].observation.pixels();
        dominant_assignments(batch[s], tmpl.kernel_limb, 0, scene_fg[s], scene_assign[s]);
    }
    std::vector<int> fg_idx, bg_idx;
    std::vector<std::pair<int, int>> fg_assign;
    for (std::size_t s = 0; s < s_count; ++s) {
        for (std::size_t i = 0; i < scene_fg[s].size(); ++i) {
            fg_idx.push_back(pixel_offset[s] + scene_fg[s][i]);
            fg_assign.push_back(scene_assign[s][i]);
        }
        for (std::size_t p = 0; p < batch[s].mask.size(); ++p)
            if (!batch[s].mask[p]) bg_idx.push_back(pixel_offset[s] + static_cast<int>(p));
    }

    AdamState adam;
    std::vector<double> params = extractor.params();
    adam.init(params.size());

    TrainHistory history;
    std::vector<FeatureMap> feats(s_count);
    std::vector<std::vector<double>> rendered(s_count);  // per-pixel phi-hat render
    std::vector<double> batch_features;
    batch_features.resize(static_cast<std::size_t>(total_pixels) * d);

    auto refresh = [&]() {
        // extract features and re-render the expectation features with the
        // current bank through the cached contributions
        for (std::size_t s = 0; s < s_count; ++s) {
            feats[s] = extractor.forward(scenes[s].observation);
            std::copy(feats[s].data.begin(), feats[s].data.end(),
                      batch_features.begin() + static_cast<std::size_t>(pixel_offset[s]) * d);
            std::vector<double> expected = expected_kernel_features<double>(
                bank,
                [&] {
                    PosedBody posed = pose_kernels(tmpl, scenes[s].theta, scenes[s].beta);
                    std::vector<Vec3d> dirs(posed.limb_orientations.size());
                    for (std::size_t l = 0; l < dirs.size(); ++l)
                        dirs[l] = scenes[s].camera.rotation * posed.limb_orientations[l];
                    return dirs;
                }(),
                tmpl.kernel_limb, bins);
            std::vector<double>& r = rendered[s];
            r.assign(feats[s].data.size(), 0.0);
            for (const Contribution& c : batch[s].contributions) {
                double* px = r.data() + static_cast<std::size_t>(c.pixel) * d;
                const double* phi = expected.data() + static_cast<std::size_t>(c.kernel) * d;
                for (int j = 0; j < d; ++j) px[j] += c.alpha * phi[j];
            }
        }
    };

    std::vector<double> grads(params.size());
    for (int epoch = 0; epoch <= config.epochs; ++epoch) {
        refresh();

        // losses (and feature gradients while we are at it)
        double nll = 0.0;
        std::vector<std::vector<double>> d_feats(s_count);
        for (std::size_t s = 0; s < s_count; ++s)
            nll += image_nll_feature_grad(feats[s], rendered[s], batch[s].mask, background,
                                          bank.fg_sigma, config.robust_mode, &d_feats[s]);
        nll /= static_cast<double>(s_count);
        ContrastiveResult contrast = contrastive_losses(
            batch_features, total_pixels, d, fg_idx, bg_idx, fg_assign,
            config.seed + static_cast<uint64_t>(epoch) * 1000003ull, config.max_pairs, true);
        double total = nll + config.contrast_weight * contrast.total;
        if (!std::isfinite(total)) throw DivergenceError("train_loop: non-finite training loss");

        history.nll.push_back(nll);
        history.l_fg.push_back(contrast.l_fg);
        history.l_3d.push_back(contrast.l_3d);
        history.l_bg.push_back(contrast.l_bg);
        history.total.push_back(total);
        if (epoch == config.epochs) break;

        // (a) extractor step
        std::fill(grads.begin(), grads.end(), 0.0);
        const double inv_s = 1.0 / static_cast<double>(s_count);
        for (std::size_t s = 0; s < s_count; ++s) {
            std::vector<double>& df = d_feats[s];
            const double* dc =
                contrast.d_features.data() + static_cast<std::size_t>(pixel_offset[s]) * d;
            for (std::size_t i = 0; i < df.size(); ++i)
                df[i] = inv_s * df[i] + config.contrast_weight * dc[i];
            std::vector<double> g = extractor.param_gradient(scenes[s].observation, df);
            for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += g[i];
        }
        adam_step(adam, params, grads, config.learning_rate, config.adam_beta1, config.adam_beta2,
                  config.adam_eps);
        extractor.set_params(params);

        // (b) bank MLE update + background refit on the new features
        for (std::size_t s = 0; s < s_count; ++s) feats[s] = extractor.forward(scenes[s].observation);
        BankAccumulator acc;
        acc.init(bank);
        for (std::size_t s = 0; s < s_count; ++s) acc.add(batch[s], feats[s], tmpl.kernel_limb);
        mle_update_bank(bank, acc, bank.momentum);
        std::vector<const FeatureMap*> map_ptrs;
        std::vector<const std::vector<uint8_t>*> mask_ptrs;
        for (std::size_t s = 0; s < s_count; ++s) {
            map_ptrs.push_back(&feats[s]);
            mask_ptrs.push_back(&batch[s].mask);
        }
        background = fit_background(map_ptrs, mask_ptrs);
    }
    return history;
}

}  // namespace nbv
