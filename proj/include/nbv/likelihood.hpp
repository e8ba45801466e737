#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nbv/body_model.hpp"
#include "nbv/renderer.hpp"

namespace nbv {

// Predefined limb-orientation bins on the camera yz-plane unit circle.
struct OrientationBins {
    std::vector<Vec3d> directions;  // O unit vectors, x component 0
    double concentration = 5.0;     // shared kappa

    int count() const { return static_cast<int>(directions.size()); }
};

OrientationBins make_orientation_bins(int count, double kappa);

// K x O x D pose-dependent kernel features, L2-normalized rows.
struct KernelFeatureBank {
    int num_kernels = 0, num_orientations = 0, feature_dim = 0;
    std::vector<double> features;  // K*O*D, [k][o][d]
    double fg_sigma = 1.0;
    double momentum = 0.9;

    double* feature(int k, int o) {
        return features.data() + (static_cast<std::size_t>(k) * num_orientations + o) * feature_dim;
    }
    const double* feature(int k, int o) const {
        return features.data() + (static_cast<std::size_t>(k) * num_orientations + o) * feature_dim;
    }

    void validate() const;
};

// Deterministic pseudo-random unit-norm bank; the desk-scale stand-in for a
// trained feature bank.
KernelFeatureBank make_random_bank(int num_kernels, int num_orientations, int feature_dim,
                                   uint64_t seed, double fg_sigma = 1.0, double momentum = 0.9);

struct BackgroundModel {
    std::vector<double> mean;  // D
    double sigma = 1.0;

    void validate() const;
};

enum class RobustMode { kMarginal, kMap, kOff };

struct RobustConfig {
    RobustMode mode = RobustMode::kMarginal;
    static constexpr double occlusion_prior = 0.5;
};

struct FeatureMap {
    int height = 0, width = 0, channels = 0;
    std::vector<double> data;  // H'*W'*D, channel-innermost

    double* pixel(int p) { return data.data() + static_cast<std::size_t>(p) * channels; }
    const double* pixel(int p) const {
        return data.data() + static_cast<std::size_t>(p) * channels;
    }
    int pixels() const { return height * width; }
};

// --- Templated likelihood kernels -------------------------------------------

// vMF-mixture responsibilities over the orientation bins for a unit limb
// direction expressed in the camera frame. The direction is projected onto
// the yz-plane and renormalized; a near-zero projection yields uniform
// weights.
template <class T>
std::vector<T> orientation_weights(const Vec3<T>& limb_dir_cam, const OrientationBins& bins) {
    using std::exp;
    using std::sqrt;
    const int o_count = bins.count();
    std::vector<T> w(static_cast<std::size_t>(o_count));
    T py = limb_dir_cam.y, pz = limb_dir_cam.z;
    T pn2 = py * py + pz * pz;
    if (value_of(pn2) < 1e-12) {  // projection norm < 1e-6
        for (auto& x : w) x = T(1.0 / o_count);
        return w;
    }
    T inv = T(1) / sqrt(pn2);
    py = py * inv;
    pz = pz * inv;
    // softmax of kappa * <bin, l_proj>; the shared-kappa vMF normalizers cancel
    double max_val = -1e300;
    std::vector<T> logits(static_cast<std::size_t>(o_count));
    for (int o = 0; o < o_count; ++o) {
        logits[static_cast<std::size_t>(o)] =
            bins.concentration * (bins.directions[static_cast<std::size_t>(o)].y * py +
                                  bins.directions[static_cast<std::size_t>(o)].z * pz);
        max_val = std::max(max_val, value_of(logits[static_cast<std::size_t>(o)]));
    }
    T denom{};
    for (int o = 0; o < o_count; ++o) {
        w[static_cast<std::size_t>(o)] = exp(logits[static_cast<std::size_t>(o)] - max_val);
        denom = denom + w[static_cast<std::size_t>(o)];
    }
    T inv_denom = T(1) / denom;
    for (auto& x : w) x = x * inv_denom;
    return w;
}

// Per-kernel expected feature E[phi_k | theta, beta] = sum_o w_o phi_{ko}.
// limb_dirs_cam are the camera-frame limb orientations; returns K*D.
template <class T>
std::vector<T> expected_kernel_features(const KernelFeatureBank& bank,
                                        const std::vector<Vec3<T>>& limb_dirs_cam,
                                        const std::vector<int>& kernel_limb,
                                        const OrientationBins& bins) {
    const int k_count = bank.num_kernels;
    const int d = bank.feature_dim;
    std::vector<std::vector<T>> per_limb(limb_dirs_cam.size());
    for (std::size_t l = 0; l < limb_dirs_cam.size(); ++l)
        per_limb[l] = orientation_weights(limb_dirs_cam[l], bins);

    std::vector<T> out(static_cast<std::size_t>(k_count) * d, T(0));
    for (int k = 0; k < k_count; ++k) {
        const std::vector<T>& w = per_limb[static_cast<std::size_t>(kernel_limb[static_cast<std::size_t>(k)])];
        for (int o = 0; o < bank.num_orientations; ++o) {
            const double* phi = bank.feature(k, o);
            for (int j = 0; j < d; ++j)
                out[static_cast<std::size_t>(k) * d + j] =
                    out[static_cast<std::size_t>(k) * d + j] + w[static_cast<std::size_t>(o)] * phi[j];
        }
    }
    return out;
}

// Gaussian NLL ||f - phi||^2 / (2 sigma^2) + D log(sigma sqrt(2 pi)).
template <class T>
T foreground_nll(const double* f, const T* phi_hat, int d, double sigma) {
    using std::log;
    T acc{};
    for (int j = 0; j < d; ++j) {
        T diff = phi_hat[j] - f[j];
        acc = acc + diff * diff;
    }
    constexpr double log_sqrt_two_pi = 0.9189385332046727;
    return acc * (0.5 / (sigma * sigma)) + d * (std::log(sigma) + log_sqrt_two_pi);
}

double background_nll(const double* f, const BackgroundModel& bg, int d);

// Robust per-pixel NLL (Eq. with the 0.5/0.5 occlusion switch prior).
template <class T>
T robust_pixel_nll(const T& nll_fg, double nll_bg, RobustMode mode) {
    using std::exp;
    using std::log;
    constexpr double log2 = 0.6931471805599453;
    if (mode == RobustMode::kOff) return nll_fg;
    if (mode == RobustMode::kMap)
        return (value_of(nll_fg) <= nll_bg ? nll_fg : T(nll_bg)) + log2;
    // marginal: -log(0.5 e^{-fg} + 0.5 e^{-bg}), stabilized around the smaller
    if (value_of(nll_fg) <= nll_bg)
        return nll_fg + log2 - log(1.0 + exp(nll_fg - nll_bg));
    return nll_bg + log2 - log(1.0 + exp(nll_bg - nll_fg));
}

// -log sum_o w_o N(f; phi_o, sigma^2 I) via log-sum-exp. Used by the
// O-ablation harness and training-side evaluation.
double gmm_pixel_nll(const double* f, const std::vector<double>& per_orientation_features,
                     const std::vector<double>& weights, int d, double sigma);

// Mean per-pixel NLL over the feature map: robust foreground NLL inside the
// mask, background NLL outside. Normalized by total pixel count.
double image_nll(const FeatureMap& observed, const RenderOutput& render,
                 const std::vector<uint8_t>& mask, const BackgroundModel& bg, double fg_sigma,
                 RobustMode mode);

}  // namespace nbv
