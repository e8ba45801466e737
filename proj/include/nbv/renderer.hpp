#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nbv/body_model.hpp"
#include "nbv/camera.hpp"

namespace nbv {

struct RenderParams {
    double density_scale = 250.0;  // lambda; see docs on peak opacity
    double t_near = 0.1, t_far = 20.0;
    double amplitude_cutoff = 1e-6;    // skip kernels with c*s*sqrt(2pi) below
    double contribution_cutoff = 1e-5; // record (pixel, kernel, alpha) above
    bool parallel = true;
};

struct Contribution {
    int32_t pixel;   // row * W' + col
    int32_t kernel;
    double alpha;
};

struct RenderOutput {
    int height = 0, width = 0, channels = 0;
    std::vector<double> features;  // H'*W'*D, channel-innermost
    std::vector<double> opacity;   // H'*W', clamped to [0, 1]
    std::vector<double> depth;     // H'*W', opacity-weighted mean ray depth
    std::vector<Contribution> contributions;  // row-major pixel order

    double feature(int pixel, int d) const {
        return features[static_cast<std::size_t>(pixel) * channels + d];
    }
};

// --- Templated per-ray kernels ---------------------------------------------

// Restriction of a scaled 3D Gaussian to a ray:
// density(t) = c * exp(-(t - t_hat)^2 / (2 s^2)).
template <class T>
struct RayGaussian {
    T amplitude;  // c
    T center;     // t_hat
    T width;      // s
};

template <class T>
RayGaussian<T> project_kernel_on_ray(const Vec3<T>& mean, const Mat3<T>& precision,
                                     const Vec3d& origin, const Vec3d& direction,
                                     double density_scale) {
    using std::exp;
    using std::sqrt;
    Vec3<T> delta{mean.x - origin.x, mean.y - origin.y, mean.z - origin.z};
    Vec3<T> ad = precision * Vec3<T>{T(direction.x), T(direction.y), T(direction.z)};
    T dad = direction.x * ad.x + direction.y * ad.y + direction.z * ad.z;  // d^T A d
    if (value_of(dad) <= 0.0) throw MathError("project_kernel_on_ray: precision not SPD");
    T s2 = T(1) / dad;
    T t_hat = (delta.x * ad.x + delta.y * ad.y + delta.z * ad.z) * s2;  // (d^T A delta) s^2
    Vec3<T> a_delta = precision * delta;
    T dada = delta.x * a_delta.x + delta.y * a_delta.y + delta.z * a_delta.z;
    constexpr double inv_two_pi_32 = 0.06349363593424097;  // (2 pi)^{-3/2}
    T c = density_scale * inv_two_pi_32 * sqrt(det(precision)) *
          exp(-0.5 * (dada - t_hat * t_hat * dad));
    return {c, t_hat, sqrt(s2)};
}

// Integral of the ray-restricted Gaussian over [t0, t1].
template <class T>
T kernel_ray_mass(const RayGaussian<T>& g, const T& t0, const T& t1) {
    using std::erf;
    constexpr double sqrt_half = 0.7071067811865476;
    constexpr double sqrt_two_pi = 2.5066282746310002;
    T inv = T(sqrt_half) / g.width;
    return g.amplitude * g.width * (0.5 * sqrt_two_pi) *
           (erf((t1 - g.center) * inv) - erf((t0 - g.center) * inv));
}

// Point-transmittance volume rendering of one ray: for each surviving kernel
// alpha_k = exp(-sum_j mass_j(t_near, t_hat_k)) * mass_k(t_near, t_far).
// `active` receives the original indices of kernels that pass the amplitude
// cutoff; `alphas` is parallel to it. feature_out must hold D zeros on entry.
template <class T>
void render_ray_core(const std::vector<Vec3<T>>& means, const std::vector<Mat3<T>>& precisions,
                     const std::vector<T>& expected_features, int feature_dim, const Ray& ray,
                     const RenderParams& params, std::vector<int>& active,
                     std::vector<T>& alphas, T* feature_out, T& opacity_sum) {
    using std::exp;
    constexpr double sqrt_two_pi = 2.5066282746310002;
    const int k_total = static_cast<int>(means.size());

    active.clear();
    std::vector<RayGaussian<T>> projs;
    for (int k = 0; k < k_total; ++k) {
        RayGaussian<T> g = project_kernel_on_ray(means[static_cast<std::size_t>(k)],
                                                 precisions[static_cast<std::size_t>(k)],
                                                 ray.origin, ray.direction, params.density_scale);
        if (value_of(g.amplitude) * value_of(g.width) * sqrt_two_pi < params.amplitude_cutoff)
            continue;
        active.push_back(k);
        projs.push_back(g);
    }

    const int n = static_cast<int>(active.size());
    alphas.assign(static_cast<std::size_t>(n), T(0));
    opacity_sum = T(0);
    for (int a = 0; a < n; ++a) {
        const RayGaussian<T>& ga = projs[static_cast<std::size_t>(a)];
        // Kernels centered before t_near see full transmittance.
        T upper = value_of(ga.center) > ray.t_near ? ga.center : T(ray.t_near);
        T acc{};
        for (int b = 0; b < n; ++b)
            acc = acc + kernel_ray_mass(projs[static_cast<std::size_t>(b)], T(ray.t_near), upper);
        T alpha = exp(-acc) * kernel_ray_mass(ga, T(ray.t_near), T(ray.t_far));
        alphas[static_cast<std::size_t>(a)] = alpha;
        opacity_sum = opacity_sum + alpha;
        for (int d = 0; d < feature_dim; ++d) {
            std::size_t idx =
                static_cast<std::size_t>(active[static_cast<std::size_t>(a)]) * feature_dim + d;
            feature_out[d] = feature_out[d] + alpha * expected_features[idx];
        }
    }
}

// --- Double-precision feature-map rendering ---------------------------------

// Renders every feature-grid pixel. Deterministic and independent of the
// OpenMP schedule: per-row results are reduced in row order.
RenderOutput render_feature_map(const PosedBody& posed, const std::vector<double>& expected_features,
                                int feature_dim, const Camera& camera, const RenderParams& params);

// Serial reference implementation (kept for testing and benchmarking).
RenderOutput render_feature_map_serial(const PosedBody& posed,
                                       const std::vector<double>& expected_features,
                                       int feature_dim, const Camera& camera,
                                       const RenderParams& params);

// mask = opacity > tau.
std::vector<uint8_t> foreground_mask(const RenderOutput& output, double tau);

}  // namespace nbv
