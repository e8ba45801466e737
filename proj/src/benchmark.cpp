#include "nbv/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "nbv/io.hpp"

namespace nbv {

namespace {

std::vector<double> scene_expected_features(const BodyTemplate& tmpl, const PosedBody& posed,
                                            const KernelFeatureBank& bank,
                                            const OrientationBins& bins, const Camera& camera) {
    std::vector<Vec3d> dirs(posed.limb_orientations.size());
    for (std::size_t l = 0; l < dirs.size(); ++l)
        dirs[l] = camera.rotation * posed.limb_orientations[l];
    return expected_kernel_features<double>(bank, dirs, tmpl.kernel_limb, bins);
}

bool joints_on_screen(const std::vector<Vec3d>& joints, const Camera& camera) {
    for (const Vec3d& j : joints) {
        Vec3d p = camera.project(j);
        if (p.z <= 0.0) return false;
        if (p.x < 0.0 || p.x >= camera.image_width || p.y < 0.0 || p.y >= camera.image_height)
            return false;
    }
    return true;
}

// Best square placement covering closest to `target` foreground pixels.
OccluderSpec best_occluder(const std::vector<uint8_t>& mask, int h, int w, std::size_t target) {
    // integral image of the mask
    std::vector<int> integral(static_cast<std::size_t>(h + 1) * (w + 1), 0);
    auto at = [&](int r, int c) -> int& { return integral[static_cast<std::size_t>(r) * (w + 1) + c]; };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            at(r + 1, c + 1) =
                at(r, c + 1) + at(r + 1, c) - at(r, c) + (mask[static_cast<std::size_t>(r) * w + c] ? 1 : 0);
    OccluderSpec best;
    long best_err = -1;
    for (int size = 1; size <= std::min(h, w); ++size)
        for (int r = 0; r + size <= h; ++r)
            for (int c = 0; c + size <= w; ++c) {
                int covered = at(r + size, c + size) - at(r, c + size) - at(r + size, c) + at(r, c);
                long err = std::labs(static_cast<long>(covered) - static_cast<long>(target));
                if (best_err < 0 || err < best_err) {
                    best_err = err;
                    best.active = true;
                    best.row0 = r;
                    best.col0 = c;
                    best.size = size;
                    if (err == 0) return best;
                }
            }
    return best;
}

}  // namespace

std::vector<double> procedural_texture(int height, int width, int channels, uint64_t seed) {
    // value noise: gaussian samples on a coarse lattice, bilinear interpolation
    constexpr int step = 4;
    int ch = height / step + 2, cw = width / step + 2;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> coarse(static_cast<std::size_t>(ch) * cw * channels);
    for (double& v : coarse) v = gauss(rng);
    std::vector<double> out(static_cast<std::size_t>(height) * width * channels);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            double fr = static_cast<double>(r) / step, fc = static_cast<double>(c) / step;
            int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
            double ar = fr - r0, ac = fc - c0;
            for (int j = 0; j < channels; ++j) {
                auto v = [&](int rr, int cc) {
                    return coarse[(static_cast<std::size_t>(rr) * cw + cc) * channels + j];
                };
                out[(static_cast<std::size_t>(r) * width + c) * channels + j] =
                    (1 - ar) * ((1 - ac) * v(r0, c0) + ac * v(r0, c0 + 1)) +
                    ar * ((1 - ac) * v(r0 + 1, c0) + ac * v(r0 + 1, c0 + 1));
            }
        }
    return out;
}

FeatureMap apply_occluder(const FeatureMap& observation, const OccluderSpec& occ) {
    FeatureMap out = observation;
    if (!occ.active || occ.size <= 0) return out;
    std::vector<double> tex =
        procedural_texture(occ.size, occ.size, observation.channels, occ.fill_seed);
    for (int r = 0; r < occ.size; ++r) {
        int row = occ.row0 + r;
        if (row < 0 || row >= observation.height) continue;
        for (int c = 0; c < occ.size; ++c) {
            int col = occ.col0 + c;
            if (col < 0 || col >= observation.width) continue;
            double* dst = out.pixel(row * observation.width + col);
            const double* src =
                tex.data() + (static_cast<std::size_t>(r) * occ.size + c) * observation.channels;
            for (int j = 0; j < observation.channels; ++j) dst[j] = src[j];
        }
    }
    return out;
}

SyntheticScene synth_scene(const SceneConfig& config, const BodyTemplate& tmpl,
                           const KernelFeatureBank& bank, const OrientationBins& bins,
                           const BackgroundModel& background, const RenderParams& render_params,
                           uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int d = bank.feature_dim;

    for (int attempt = 0; attempt < config.retry_budget; ++attempt) {
        SyntheticScene scene;
        scene.seed = seed;
        scene.camera = config.camera;
        scene.theta = PoseParams::rest(tmpl.num_joints);
        for (auto& v : scene.theta.joint_rotations)
            v = {config.joint_angle_range * unit(rng), config.joint_angle_range * unit(rng),
                 config.joint_angle_range * unit(rng)};
        scene.theta.root_translation = {config.root_jitter * unit(rng),
                                        config.root_jitter * unit(rng),
                                        config.root_jitter * unit(rng)};
        scene.beta = ShapeParams::zero(tmpl.num_shape_dims);
        for (auto& b : scene.beta.coefficients) b = config.shape_range * unit(rng);

        PosedBody posed = pose_kernels(tmpl, scene.theta, scene.beta);
        if (!joints_on_screen(posed.joints, scene.camera)) continue;

        std::vector<double> feats =
            scene_expected_features(tmpl, posed, bank, bins, scene.camera);
        RenderOutput render = render_feature_map(posed, feats, d, scene.camera, render_params);
        scene.fg_mask = foreground_mask(render, config.mask_tau);
        std::size_t fg_count = 0;
        for (uint8_t m : scene.fg_mask) fg_count += m;
        if (fg_count < 16) continue;

        scene.observation.height = render.height;
        scene.observation.width = render.width;
        scene.observation.channels = d;
        scene.observation.data.resize(render.features.size());
        for (int p = 0; p < render.height * render.width; ++p) {
            double* dst = scene.observation.pixel(p);
            if (scene.fg_mask[static_cast<std::size_t>(p)]) {
                for (int j = 0; j < d; ++j)
                    dst[j] = render.feature(p, j) + config.fg_noise_std * gauss(rng);
            } else {
                for (int j = 0; j < d; ++j)
                    dst[j] = background.mean[static_cast<std::size_t>(j)] +
                             background.sigma * gauss(rng);
            }
        }

        if (config.occlude_fraction > 0.0) {
            std::size_t target = static_cast<std::size_t>(
                std::lround(config.occlude_fraction * static_cast<double>(fg_count)));
            scene.occluder =
                best_occluder(scene.fg_mask, render.height, render.width, target);
            scene.occluder.fill_seed = rng();
            scene.observation = apply_occluder(scene.observation, scene.occluder);
        }

        scene.gt_joints = posed.joints;
        scene.gt_joints_2d = project_joints(posed.joints, scene.camera);
        return scene;
    }
    throw ValidationError("synth_scene: retry budget exhausted (body off-screen?)");
}

double mpjpe(const std::vector<Vec3d>& pred, const std::vector<Vec3d>& gt,
             const std::vector<uint8_t>& include) {
    if (pred.size() != gt.size() || include.size() != gt.size())
        throw ShapeError("mpjpe: joint count mismatch");
    double acc = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!include[i]) continue;
        acc += norm(pred[i] - gt[i]);
        ++n;
    }
    if (n == 0) throw ValidationError("mpjpe: no included joints");
    return acc / n * 1000.0;
}

double pa_mpjpe(const std::vector<Vec3d>& pred, const std::vector<Vec3d>& gt,
                const std::vector<uint8_t>& include) {
    if (pred.size() != gt.size() || include.size() != gt.size())
        throw ShapeError("pa_mpjpe: joint count mismatch");
    std::vector<int> idx;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (include[i]) idx.push_back(static_cast<int>(i));
    const int n = static_cast<int>(idx.size());
    if (n < 3) throw ValidationError("pa_mpjpe: need at least 3 included joints");

    Eigen::Matrix3Xd x(3, n), y(3, n);
    for (int i = 0; i < n; ++i) {
        const Vec3d& p = pred[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        const Vec3d& g = gt[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        x.col(i) << p.x, p.y, p.z;
        y.col(i) << g.x, g.y, g.z;
    }
    Eigen::Vector3d mx = x.rowwise().mean(), my = y.rowwise().mean();
    x.colwise() -= mx;
    y.colwise() -= my;
    double var_x = x.squaredNorm() / n;
    if (var_x < 1e-18) throw MathError("pa_mpjpe: degenerate prediction (all points equal)");
    Eigen::Matrix3d sigma = y * x.transpose() / n;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d dvals = svd.singularValues();
    if (dvals(1) < 1e-12 * std::max(dvals(0), 1e-300))
        throw MathError("pa_mpjpe: degenerate (collinear) configuration");
    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
    Eigen::Matrix3d rot = svd.matrixU() * s * svd.matrixV().transpose();
    double scale = (dvals.asDiagonal() * s).trace() / var_x;
    Eigen::Vector3d t = my - scale * rot * mx;

    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += (scale * rot * (x.col(i) + mx) + t - (y.col(i) + my)).norm();
    return acc / n * 1000.0;
}

double pckh(const std::vector<Vec3d>& pred_2d, const std::vector<Vec3d>& gt_2d,
            double head_length, const std::vector<uint8_t>& include, double factor) {
    if (pred_2d.size() != gt_2d.size() || include.size() != gt_2d.size())
        throw ShapeError("pckh: joint count mismatch");
    if (head_length <= 0.0) throw ValidationError("pckh: head length must be positive");
    int n = 0, correct = 0;
    for (std::size_t i = 0; i < gt_2d.size(); ++i) {
        if (!include[i]) continue;
        double dx = pred_2d[i].x - gt_2d[i].x, dy = pred_2d[i].y - gt_2d[i].y;
        if (std::sqrt(dx * dx + dy * dy) < factor * head_length) ++correct;
        ++n;
    }
    if (n == 0) throw ValidationError("pckh: no included joints");
    return static_cast<double>(correct) / n;
}

std::vector<Vec3d> posed_joints(const BodyTemplate& tmpl, const PoseParams& theta,
                                const ShapeParams& beta) {
    return pose_kernels(tmpl, theta, beta).joints;
}

std::vector<Vec3d> project_joints(const std::vector<Vec3d>& joints, const Camera& camera) {
    std::vector<Vec3d> out(joints.size());
    for (std::size_t i = 0; i < joints.size(); ++i) out[i] = camera.project(joints[i]);
    return out;
}

double stick_head_length(const std::vector<Vec3d>& gt_joints_2d) {
    if (gt_joints_2d.size() <= static_cast<std::size_t>(kHeadTop))
        throw ShapeError("stick_head_length: not a stick skeleton");
    double dx = gt_joints_2d[kHeadTop].x - gt_joints_2d[kNeck].x;
    double dy = gt_joints_2d[kHeadTop].y - gt_joints_2d[kNeck].y;
    return std::sqrt(dx * dx + dy * dy);
}

namespace {

struct PixelBBox {
    double min_x, min_y, max_x, max_y;
};

// Body bounding box in image pixels, from the unoccluded foreground mask.
PixelBBox mask_bbox(const std::vector<uint8_t>& mask, const Camera& camera) {
    int h = camera.grid_height(), w = camera.grid_width();
    int rmin = h, rmax = -1, cmin = w, cmax = -1;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (mask[static_cast<std::size_t>(r) * w + c]) {
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
                cmin = std::min(cmin, c);
                cmax = std::max(cmax, c);
            }
    if (rmax < 0) throw ValidationError("adv_occ_sweep: empty foreground mask");
    double s = camera.feature_stride;
    return {cmin * s, rmin * s, (cmax + 1) * s, (rmax + 1) * s};
}

struct JointEval {
    double mpjpe_mm, pa_mm, pckh_frac;
    int included, excluded;
};

JointEval evaluate_fit(const BodyTemplate& tmpl, const FitResult& result,
                       const SyntheticScene& scene, const std::vector<uint8_t>& include,
                       double pckh_factor) {
    std::vector<Vec3d> pred = posed_joints(tmpl, result.theta, result.beta);
    std::vector<Vec3d> pred2d = project_joints(pred, scene.camera);
    JointEval e{};
    e.included = static_cast<int>(std::count(include.begin(), include.end(), uint8_t{1}));
    e.excluded = static_cast<int>(include.size()) - e.included;
    e.mpjpe_mm = mpjpe(pred, scene.gt_joints, include);
    e.pa_mm = pa_mpjpe(pred, scene.gt_joints, include);
    e.pckh_frac = pckh(pred2d, scene.gt_joints_2d, stick_head_length(scene.gt_joints_2d), include,
                       pckh_factor);
    return e;
}

}  // namespace

OccSweepReport adv_occ_sweep(const SyntheticScene& scene, const BodyTemplate& tmpl,
                             const KernelFeatureBank& bank, const OrientationBins& bins,
                             const BackgroundModel& background, const RenderParams& render_params,
                             const FitConfig& fit_config, const PosePrior& prior,
                             const PoseParams& init_theta, const ShapeParams& init_beta,
                             const SweepConfig& sweep) {
    if (sweep.patch_px > sweep.image_px)
        throw ConfigError("adv_occ_sweep: patch larger than the protocol image");
    OccSweepReport report;
    report.patch_px = sweep.patch_px;
    report.stride_px = sweep.stride_px;
    report.image_px = sweep.image_px;
    int per_axis = (sweep.image_px - sweep.patch_px) / sweep.stride_px + 1;
    report.grid_rows = report.grid_cols = per_axis;
    report.placements.resize(static_cast<std::size_t>(per_axis) * per_axis);

    // protocol constants scaled to the actual image / feature grid
    const Camera& camera = scene.camera;
    double img_scale = static_cast<double>(camera.image_width) / sweep.image_px;
    double grid_scale = img_scale / camera.feature_stride;
    int patch_grid = std::max(1, static_cast<int>(std::lround(sweep.patch_px * grid_scale)));

    std::vector<uint8_t> all_joints(scene.gt_joints.size(), 1);
    PixelBBox bbox = mask_bbox(scene.fg_mask, camera);

    auto fit_map = [&](const FeatureMap& observed) {
        FitProblem problem;
        problem.tmpl = &tmpl;
        problem.bank = &bank;
        problem.bins = &bins;
        problem.background = &background;
        problem.observed = &observed;
        problem.render = render_params;
        problem.render.parallel = false;  // placements parallelize at this level
        problem.prior = prior;
        problem.config = fit_config;
        return fit(problem, init_theta, init_beta, scene.camera);
    };

    FitResult unocc = fit_map(scene.observation);
    JointEval base = evaluate_fit(tmpl, unocc, scene, all_joints, sweep.pckh_factor);
    report.unoccluded_mpjpe_mm = base.mpjpe_mm;
    report.unoccluded_pa_mpjpe_mm = base.pa_mm;
    report.unoccluded_pckh = base.pckh_frac;

    const int total = per_axis * per_axis;
#pragma omp parallel for schedule(dynamic) if (sweep.parallel)
    for (int idx = 0; idx < total; ++idx) {
        int gi = idx / per_axis, gj = idx % per_axis;
        double px_y = gi * sweep.stride_px * img_scale;
        double px_x = gj * sweep.stride_px * img_scale;
        double patch_px_scaled = sweep.patch_px * img_scale;

        OccluderSpec occ;
        occ.active = true;
        occ.row0 = static_cast<int>(std::lround(px_y / camera.feature_stride));
        occ.col0 = static_cast<int>(std::lround(px_x / camera.feature_stride));
        occ.size = patch_grid;
        occ.fill_seed = scene.seed * 1000003ull + static_cast<uint64_t>(idx);
        FeatureMap occluded = apply_occluder(scene.observation, occ);

        // exclusion: GT-2D inside the patch rectangle, or outside the body bbox
        std::vector<uint8_t> include(scene.gt_joints_2d.size(), 1);
        for (std::size_t j = 0; j < include.size(); ++j) {
            const Vec3d& p = scene.gt_joints_2d[j];
            bool in_patch = p.x >= px_x && p.x < px_x + patch_px_scaled && p.y >= px_y &&
                            p.y < px_y + patch_px_scaled;
            bool in_bbox =
                p.x >= bbox.min_x && p.x < bbox.max_x && p.y >= bbox.min_y && p.y < bbox.max_y;
            if (in_patch || !in_bbox) include[j] = 0;
        }

        PlacementResult& row = report.placements[static_cast<std::size_t>(idx)];
        row.row0_px = gi * sweep.stride_px;
        row.col0_px = gj * sweep.stride_px;
        row.included_joints =
            static_cast<int>(std::count(include.begin(), include.end(), uint8_t{1}));
        row.excluded_joints = static_cast<int>(include.size()) - row.included_joints;
        if (row.included_joints < 3) {
            row.mpjpe_mm = row.pa_mpjpe_mm = row.pckh_frac = 0.0;
            continue;  // too few joints for the metric set; skipped in the max
        }
        FitResult result = fit_map(occluded);
        JointEval e = evaluate_fit(tmpl, result, scene, include, sweep.pckh_factor);
        row.mpjpe_mm = e.mpjpe_mm;
        row.pa_mpjpe_mm = e.pa_mm;
        row.pckh_frac = e.pckh_frac;
    }

    for (int idx = 0; idx < total; ++idx) {
        const PlacementResult& row = report.placements[static_cast<std::size_t>(idx)];
        if (row.included_joints < 3) continue;
        if (report.worst_index < 0 || row.mpjpe_mm > report.worst_mpjpe_mm) {
            report.worst_index = idx;
            report.worst_mpjpe_mm = row.mpjpe_mm;
        }
    }
    return report;
}

void to_json(nlohmann::json& j, const OccluderSpec& o) {
    j = {{"active", o.active}, {"row0", o.row0}, {"col0", o.col0}, {"size", o.size},
         {"fill_seed", o.fill_seed}};
}

void from_json(const nlohmann::json& j, OccluderSpec& o) {
    j.at("active").get_to(o.active);
    j.at("row0").get_to(o.row0);
    j.at("col0").get_to(o.col0);
    j.at("size").get_to(o.size);
    j.at("fill_seed").get_to(o.fill_seed);
}

void save_scene(const std::string& stem, const SyntheticScene& scene) {
    write_fmap(stem + ".fmap", scene.observation);
    nlohmann::json j;
    j["schema_version"] = 1;
    j["theta"] = scene.theta;
    j["beta"] = scene.beta;
    j["camera"] = scene.camera;
    j["fg_mask"] = scene.fg_mask;
    j["occluder"] = scene.occluder;
    j["gt_joints"] = scene.gt_joints;
    j["gt_joints_2d"] = scene.gt_joints_2d;
    j["seed"] = scene.seed;
    save_json(stem + ".json", j);
}

SyntheticScene load_scene(const std::string& stem) {
    SyntheticScene scene;
    scene.observation = read_fmap(stem + ".fmap");
    nlohmann::json j = load_json(stem + ".json");
    try {
        j.at("theta").get_to(scene.theta);
        j.at("beta").get_to(scene.beta);
        j.at("camera").get_to(scene.camera);
        j.at("fg_mask").get_to(scene.fg_mask);
        j.at("occluder").get_to(scene.occluder);
        j.at("gt_joints").get_to(scene.gt_joints);
        j.at("gt_joints_2d").get_to(scene.gt_joints_2d);
        j.at("seed").get_to(scene.seed);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_scene: malformed document " + stem + ".json: " + e.what());
    }
    return scene;
}

}  // namespace nbv
