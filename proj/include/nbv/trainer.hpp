#pragma once

#include <cstdint>
#include <vector>

#include "nbv/body_model.hpp"
#include "nbv/likelihood.hpp"
#include "nbv/renderer.hpp"

namespace nbv {

// Differentiable map from raw observation grids (H'xW'xC) to feature maps
// (H'xW'xD) with parameter get/set and reverse-mode parameter gradients.
class FeatureExtractor {
  public:
    virtual ~FeatureExtractor() = default;

    virtual int in_channels() const = 0;
    virtual int out_channels() const = 0;
    virtual FeatureMap forward(const FeatureMap& observation) const = 0;

    virtual std::vector<double> params() const = 0;
    virtual void set_params(const std::vector<double>& p) = 0;

    // d loss / d params given d loss / d output, chained through forward().
    virtual std::vector<double> param_gradient(const FeatureMap& observation,
                                               const std::vector<double>& d_output) const = 0;
};

// Per-pixel affine map: out = W in + b with W (D x C) and b (D).
class AffineExtractor : public FeatureExtractor {
  public:
    AffineExtractor(int in_channels, int out_channels);
    static AffineExtractor identity(int channels);

    int in_channels() const override { return c_in_; }
    int out_channels() const override { return d_out_; }
    FeatureMap forward(const FeatureMap& observation) const override;
    std::vector<double> params() const override;  // W row-major, then b
    void set_params(const std::vector<double>& p) override;
    std::vector<double> param_gradient(const FeatureMap& observation,
                                       const std::vector<double>& d_output) const override;

  private:
    int c_in_, d_out_;
    std::vector<double> weight_;  // d_out * c_in
    std::vector<double> bias_;    // d_out
};

// One training sample: raw observation plus its ground-truth scene.
struct TrainScene {
    FeatureMap observation;  // H'*W'*C
    PoseParams theta;
    ShapeParams beta;
    Camera camera;
};

// GT-pose render quantities that do not depend on the extractor or bank:
// recorded per-pixel kernel alphas, the foreground mask, and the vMF
// orientation weights per limb. gamma_{iko} = alpha_k(r_i) * weight_o(limb(k)).
struct TrainBatchScene {
    std::vector<Contribution> contributions;
    std::vector<uint8_t> mask;
    std::vector<std::vector<double>> limb_weights;  // kNumLimbs x O
};

TrainBatchScene prepare_scene(const TrainScene& scene, const BodyTemplate& tmpl,
                              const KernelFeatureBank& bank, const OrientationBins& bins,
                              const RenderParams& params, double mask_tau);

// Weighted feature sums for the bank MLE update.
struct BankAccumulator {
    int num_kernels = 0, num_orientations = 0, feature_dim = 0;
    std::vector<double> numer;  // K*O*D
    std::vector<double> denom;  // K*O

    void init(const KernelFeatureBank& bank);
    // Adds gamma-weighted extracted features of one scene.
    void add(const TrainBatchScene& scene, const FeatureMap& features,
             const std::vector<int>& kernel_limb);
};

// phi <- normalize(m phi + (1 - m) * numer/denom); zero-support rows unchanged.
void mle_update_bank(KernelFeatureBank& bank, const BankAccumulator& acc, double momentum);

// Mean + RMS-over-channels std of all non-foreground features; sigma clamped
// to sigma_min.
BackgroundModel fit_background(const std::vector<const FeatureMap*>& maps,
                               const std::vector<const std::vector<uint8_t>*>& masks,
                               double sigma_min = 1e-3);

struct ContrastiveResult {
    double l_fg = 0.0, l_3d = 0.0, l_bg = 0.0, total = 0.0;
    std::vector<double> d_features;  // d total / d features; empty unless requested
};

// Negative mean squared distance over seeded, capped samples of ordered pairs:
// FG x FG distinct pixels; same-kernel cross-orientation assignment sets; and
// FG x BG. Pixel indices address the flat `features` array (num_pixels * d).
// fg_assign holds the dominant (kernel, orientation) per fg_idx entry.
ContrastiveResult contrastive_losses(const std::vector<double>& features, int num_pixels, int d,
                                     const std::vector<int>& fg_idx, const std::vector<int>& bg_idx,
                                     const std::vector<std::pair<int, int>>& fg_assign,
                                     uint64_t seed, int max_pairs = 4096, bool with_grad = false);

// Mean per-pixel NLL of the extracted features against the GT render, plus
// its analytic gradient w.r.t. the features (training-side counterpart of
// image_nll where the observation is the variable).
double image_nll_feature_grad(const FeatureMap& features, const std::vector<double>& rendered,
                              const std::vector<uint8_t>& mask, const BackgroundModel& bg,
                              double fg_sigma, RobustMode mode, std::vector<double>* d_features);

struct TrainConfig {
    int epochs = 50;
    double learning_rate = 5e-5;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double contrast_weight = 1.0;
    int max_pairs = 4096;
    RobustMode robust_mode = RobustMode::kMarginal;
    double mask_tau = 0.5;
    uint64_t seed = 0;
};

struct TrainHistory {
    // index 0 = pre-training baseline, index e = after e epochs
    std::vector<double> nll, l_fg, l_3d, l_bg, total;
};

// Alternates extractor Adam steps on L_NLL + contrast_weight * L_contrast
// with the bank MLE update and background refit. Deterministic given seed.
TrainHistory train_loop(FeatureExtractor& extractor, const std::vector<TrainScene>& scenes,
                        const BodyTemplate& tmpl, KernelFeatureBank& bank,
                        BackgroundModel& background, const OrientationBins& bins,
                        const RenderParams& render_params, const TrainConfig& config);

}  // namespace nbv
