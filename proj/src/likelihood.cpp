#include "nbv/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nbv {

OrientationBins make_orientation_bins(int count, double kappa) {
    if (count < 1) throw ConfigError("make_orientation_bins: need at least one bin");
    if (kappa < 0.0) throw ConfigError("make_orientation_bins: kappa must be >= 0");
    OrientationBins bins;
    bins.concentration = kappa;
    bins.directions.resize(static_cast<std::size_t>(count));
    for (int o = 0; o < count; ++o) {
        double phi = 2.0 * M_PI * o / count;
        bins.directions[static_cast<std::size_t>(o)] = {0.0, std::cos(phi), std::sin(phi)};
    }
    return bins;
}

void KernelFeatureBank::validate() const {
    if (fg_sigma <= 0.0) throw ValidationError("KernelFeatureBank: sigma must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValidationError("KernelFeatureBank: momentum must be in [0,1)");
    if (features.size() != static_cast<std::size_t>(num_kernels) * num_orientations * feature_dim)
        throw ShapeError("KernelFeatureBank: feature array size mismatch");
    for (int k = 0; k < num_kernels; ++k)
        for (int o = 0; o < num_orientations; ++o) {
            const double* phi = feature(k, o);
            double n2 = 0.0;
            for (int d = 0; d < feature_dim; ++d) n2 += phi[d] * phi[d];
            if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
                throw ValidationError("KernelFeatureBank: feature row not unit-norm");
        }
}

KernelFeatureBank make_random_bank(int num_kernels, int num_orientations, int feature_dim,
                                   uint64_t seed, double fg_sigma, double momentum) {
    KernelFeatureBank bank;
    bank.num_kernels = num_kernels;
    bank.num_orientations = num_orientations;
    bank.feature_dim = feature_dim;
    bank.fg_sigma = fg_sigma;
    bank.momentum = momentum;
    bank.features.resize(static_cast<std::size_t>(num_kernels) * num_orientations * feature_dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < num_kernels; ++k)
        for (int o = 0; o < num_orientations; ++o) {
            double* phi = bank.feature(k, o);
            double n2 = 0.0;
            for (int d = 0; d < feature_dim; ++d) {
                phi[d] = gauss(rng);
                n2 += phi[d] * phi[d];
            }
            double inv = 1.0 / std::sqrt(n2);
            for (int d = 0; d < feature_dim; ++d) phi[d] *= inv;
        }
    return bank;
}

void BackgroundModel::validate() const {
    if (sigma <= 0.0) throw ValidationError("BackgroundModel: sigma must be positive");
    for (double v : mean)
        if (!std::isfinite(v)) throw ValidationError("BackgroundModel: mean not finite");
}

double background_nll(const double* f, const BackgroundModel& bg, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        double diff = f[j] - bg.mean[static_cast<std::size_t>(j)];
        acc += diff * diff;
    }
    constexpr double log_sqrt_two_pi = 0.9189385332046727;
    return acc * (0.5 / (bg.sigma * bg.sigma)) + d * (std::log(bg.sigma) + log_sqrt_two_pi);
}

double gmm_pixel_nll(const double* f, const std::vector<double>& per_orientation_features,
                     const std::vector<double>& weights, int d, double sigma) {
    const int o_count = static_cast<int>(weights.size());
    if (per_orientation_features.size() != static_cast<std::size_t>(o_count) * d)
        throw ShapeError("gmm_pixel_nll: component shape mismatch");
    constexpr double log_sqrt_two_pi = 0.9189385332046727;
    std::vector<double> log_terms(static_cast<std::size_t>(o_count));
    double max_term = -1e300;
    for (int o = 0; o < o_count; ++o) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = f[j] - per_orientation_features[static_cast<std::size_t>(o) * d + j];
            acc += diff * diff;
        }
        double lt = std::log(weights[static_cast<std::size_t>(o)]) -
                    acc * (0.5 / (sigma * sigma));
        log_terms[static_cast<std::size_t>(o)] = lt;
        max_term = std::max(max_term, lt);
    }
    double sum = 0.0;
    for (double lt : log_terms) sum += std::exp(lt - max_term);
    return -(max_term + std::log(sum)) + d * (std::log(sigma) + log_sqrt_two_pi);
}

double image_nll(const FeatureMap& observed, const RenderOutput& render,
                 const std::vector<uint8_t>& mask, const BackgroundModel& bg, double fg_sigma,
                 RobustMode mode) {
    if (observed.height != render.height || observed.width != render.width ||
        observed.channels != render.channels)
        throw ShapeError("image_nll: feature map and render grids differ");
    const int d = observed.channels;
    const int n = observed.pixels();
    // deterministic per-row accumulation
    double total = 0.0;
    for (int row = 0; row < render.height; ++row) {
        double row_sum = 0.0;
        for (int col = 0; col < render.width; ++col) {
            int p = row * render.width + col;
            const double* f = observed.pixel(p);
            if (mask[static_cast<std::size_t>(p)]) {
                double fg = foreground_nll<double>(
                    f, render.features.data() + static_cast<std::size_t>(p) * d, d, fg_sigma);
                double bgn = background_nll(f, bg, d);
                row_sum += robust_pixel_nll<double>(fg, bgn, mode);
            } else {
                row_sum += background_nll(f, bg, d);
            }
        }
        total += row_sum;
    }
    return total / n;
}

}  // namespace nbv
