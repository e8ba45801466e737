#include "nbv/renderer.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nbv {

namespace {

struct RowResult {
    std::vector<double> features;
    std::vector<double> opacity;
    std::vector<double> depth;
    std::vector<Contribution> contributions;
};

void render_row(const PosedBody& posed, const std::vector<double>& expected_features,
                int feature_dim, const Camera& camera, const RenderParams& params, int row,
                RowResult& out) {
    const int w = camera.grid_width();
    out.features.assign(static_cast<std::size_t>(w) * feature_dim, 0.0);
    out.opacity.assign(static_cast<std::size_t>(w), 0.0);
    out.depth.assign(static_cast<std::size_t>(w), 0.0);
    out.contributions.clear();

    std::vector<int> active;
    std::vector<double> alphas;
    for (int col = 0; col < w; ++col) {
        Ray ray = ray_for_pixel(camera, row, col, params.t_near, params.t_far);
        double opacity_sum = 0.0;
        render_ray_core<double>(posed.means, posed.precisions, expected_features, feature_dim,
                                ray, params, active, alphas,
                                &out.features[static_cast<std::size_t>(col) * feature_dim],
                                opacity_sum);
        double depth_acc = 0.0;
        for (std::size_t a = 0; a < active.size(); ++a) {
            if (alphas[a] > params.contribution_cutoff)
                out.contributions.push_back(
                    Contribution{row * w + col, active[a], alphas[a]});
            // opacity-weighted mean depth needs the per-kernel centers again;
            // recompute cheaply from the projection
            RayGaussian<double> g = project_kernel_on_ray(
                posed.means[static_cast<std::size_t>(active[a])],
                posed.precisions[static_cast<std::size_t>(active[a])], ray.origin, ray.direction,
                params.density_scale);
            depth_acc += alphas[a] * g.center;
        }
        out.opacity[static_cast<std::size_t>(col)] = std::clamp(opacity_sum, 0.0, 1.0);
        out.depth[static_cast<std::size_t>(col)] = opacity_sum > 0.0 ? depth_acc / opacity_sum : 0.0;
        if (opacity_sum <= 0.0)
            std::fill_n(&out.features[static_cast<std::size_t>(col) * feature_dim], feature_dim,
                        0.0);
    }
}

RenderOutput assemble(const Camera& camera, int feature_dim, std::vector<RowResult>& rows) {
    const int h = camera.grid_height();
    const int w = camera.grid_width();
    RenderOutput out;
    out.height = h;
    out.width = w;
    out.channels = feature_dim;
    out.features.resize(static_cast<std::size_t>(h) * w * feature_dim);
    out.opacity.resize(static_cast<std::size_t>(h) * w);
    out.depth.resize(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
        RowResult& rr = rows[static_cast<std::size_t>(r)];
        std::copy(rr.features.begin(), rr.features.end(),
                  out.features.begin() + static_cast<std::ptrdiff_t>(r) * w * feature_dim);
        std::copy(rr.opacity.begin(), rr.opacity.end(),
                  out.opacity.begin() + static_cast<std::ptrdiff_t>(r) * w);
        std::copy(rr.depth.begin(), rr.depth.end(),
                  out.depth.begin() + static_cast<std::ptrdiff_t>(r) * w);
        out.contributions.insert(out.contributions.end(), rr.contributions.begin(),
                                 rr.contributions.end());
    }
    return out;
}

}  // namespace

RenderOutput render_feature_map_serial(const PosedBody& posed,
                                       const std::vector<double>& expected_features,
                                       int feature_dim, const Camera& camera,
                                       const RenderParams& params) {
    const int h = camera.grid_height();
    std::vector<RowResult> rows(static_cast<std::size_t>(h));
    for (int r = 0; r < h; ++r)
        render_row(posed, expected_features, feature_dim, camera, params, r,
                   rows[static_cast<std::size_t>(r)]);
    return assemble(camera, feature_dim, rows);
}

RenderOutput render_feature_map(const PosedBody& posed, const std::vector<double>& expected_features,
                                int feature_dim, const Camera& camera,
                                const RenderParams& params) {
    if (!params.parallel) return render_feature_map_serial(posed, expected_features, feature_dim,
                                                           camera, params);
    const int h = camera.grid_height();
    std::vector<RowResult> rows(static_cast<std::size_t>(h));
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < h; ++r)
        render_row(posed, expected_features, feature_dim, camera, params, r,
                   rows[static_cast<std::size_t>(r)]);
    return assemble(camera, feature_dim, rows);
}

std::vector<uint8_t> foreground_mask(const RenderOutput& output, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw ValidationError("foreground_mask: tau must be in (0,1)");
    std::vector<uint8_t> mask(output.opacity.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = output.opacity[i] > tau ? 1 : 0;
    return mask;
}

}  // namespace nbv
