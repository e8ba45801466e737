#include "nbv/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nbv/autodiff.hpp"

namespace nbv {

using ad::Var;

namespace {

template <class T>
Mat3<T> to_scalar(const Mat3d& m) {
    Mat3<T> r;
    for (int i = 0; i < 9; ++i) r.m[i] = T(m.m[i]);
    return r;
}

// Camera-frame view of a posed body: means/precisions/limb directions after
// the world-to-camera transform. Rays then originate at the camera center.
template <class T>
struct CameraFramePosed {
    std::vector<Vec3<T>> means;
    std::vector<Mat3<T>> precisions;
    std::vector<Vec3<T>> limb_dirs;
};

template <class T>
CameraFramePosed<T> to_camera_frame(const PosedBodyT<T>& posed, const Mat3<T>& rot,
                                    const Vec3<T>& trans) {
    CameraFramePosed<T> out;
    out.means.resize(posed.means.size());
    out.precisions.resize(posed.precisions.size());
    out.limb_dirs.resize(posed.limb_orientations.size());
    for (std::size_t k = 0; k < posed.means.size(); ++k) {
        out.means[k] = rot * posed.means[k] + trans;
        out.precisions[k] = rot * posed.precisions[k] * rot.transpose();
    }
    for (std::size_t l = 0; l < posed.limb_orientations.size(); ++l)
        out.limb_dirs[l] = rot * posed.limb_orientations[l];
    return out;
}

template <class T>
T pose_prior_term(const std::vector<Vec3<T>>& joint_rotations, const PosePrior& prior,
                  double prior_weight) {
    T acc{};
    for (std::size_t i = 1; i < joint_rotations.size(); ++i) {  // root excluded
        double w = prior.weights[i];
        if (w == 0.0) continue;
        Vec3<T> diff = joint_rotations[i] - Vec3<T>{T(prior.mean_pose[i].x), T(prior.mean_pose[i].y),
                                                    T(prior.mean_pose[i].z)};
        acc = acc + w * dot(diff, diff);
    }
    return prior_weight * acc;
}

// Per-pixel forward + reverse pass on a thread-local tape. Leaves are the
// camera-frame kernel intermediates of the active kernels; their adjoints
// are accumulated into grad_buf with stride (9 + D) per kernel.
void pixel_backward(const std::vector<int>& active, const CameraFramePosed<double>& body,
                    const std::vector<double>& feats, int d, const Ray& ray,
                    const RenderParams& params, const double* f, double bg_nll_value,
                    RobustMode mode, double fg_sigma, double* grad_buf) {
    thread_local ad::Tape tape;
    thread_local std::vector<double> adjoint;
    tape.clear();

    const int n = static_cast<int>(active.size());
    const int stride = 9 + d;
    std::vector<Vec3<Var>> means(static_cast<std::size_t>(n));
    std::vector<Mat3<Var>> precs(static_cast<std::size_t>(n));
    std::vector<Var> lfeats(static_cast<std::size_t>(n) * d);
    // leaves in a fixed order: 3 mean, 6 precision (upper triangle), D features
    for (int a = 0; a < n; ++a) {
        int k = active[static_cast<std::size_t>(a)];
        const Vec3d& m = body.means[static_cast<std::size_t>(k)];
        means[static_cast<std::size_t>(a)] = {Var::leaf(m.x, tape), Var::leaf(m.y, tape),
                                              Var::leaf(m.z, tape)};
        const Mat3d& p = body.precisions[static_cast<std::size_t>(k)];
        Var p00 = Var::leaf(p(0, 0), tape), p01 = Var::leaf(p(0, 1), tape),
            p02 = Var::leaf(p(0, 2), tape), p11 = Var::leaf(p(1, 1), tape),
            p12 = Var::leaf(p(1, 2), tape), p22 = Var::leaf(p(2, 2), tape);
        Mat3<Var>& pm = precs[static_cast<std::size_t>(a)];
        pm(0, 0) = p00;
        pm(0, 1) = p01;
        pm(1, 0) = p01;
        pm(0, 2) = p02;
        pm(2, 0) = p02;
        pm(1, 1) = p11;
        pm(1, 2) = p12;
        pm(2, 1) = p12;
        pm(2, 2) = p22;
        for (int j = 0; j < d; ++j)
            lfeats[static_cast<std::size_t>(a) * d + j] =
                Var::leaf(feats[static_cast<std::size_t>(k) * d + j], tape);
    }
    const std::size_t leaf_count = tape.size();

    // forward: projections, point-transmittance alphas, rendered feature, NLL
    std::vector<RayGaussian<Var>> projs(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a)
        projs[static_cast<std::size_t>(a)] = project_kernel_on_ray<Var>(
            means[static_cast<std::size_t>(a)], precs[static_cast<std::size_t>(a)], ray.origin,
            ray.direction, params.density_scale);

    std::vector<Var> feature(static_cast<std::size_t>(d));
    for (int a = 0; a < n; ++a) {
        const RayGaussian<Var>& ga = projs[static_cast<std::size_t>(a)];
        Var upper = value_of(ga.center) > ray.t_near ? ga.center : Var(ray.t_near);
        Var acc{};
        for (int b = 0; b < n; ++b)
            acc = acc + kernel_ray_mass(projs[static_cast<std::size_t>(b)], Var(ray.t_near), upper);
        Var alpha = exp(-acc) * kernel_ray_mass(ga, Var(ray.t_near), Var(ray.t_far));
        for (int j = 0; j < d; ++j)
            feature[static_cast<std::size_t>(j)] =
                feature[static_cast<std::size_t>(j)] +
                alpha * lfeats[static_cast<std::size_t>(a) * d + j];
    }

    Var fg = foreground_nll<Var>(f, feature.data(), d, fg_sigma);
    Var pix = robust_pixel_nll<Var>(fg, bg_nll_value, mode);
    if (pix.idx < 0) return;  // constant pixel, no gradient

    adjoint.assign(tape.size(), 0.0);
    adjoint[static_cast<std::size_t>(pix.idx)] = 1.0;
    tape.backward(adjoint);

    std::size_t leaf = 0;
    for (int a = 0; a < n; ++a) {
        int k = active[static_cast<std::size_t>(a)];
        double* g = grad_buf + static_cast<std::size_t>(k) * stride;
        for (int c = 0; c < stride; ++c) g[c] += adjoint[leaf + static_cast<std::size_t>(c)];
        leaf += static_cast<std::size_t>(stride);
    }
    (void)leaf_count;
}

}  // namespace

void FitConfig::validate() const {
    if (learning_rate <= 0.0 || max_steps <= 0 || convergence_tol < 0.0 || prior_weight < 0.0)
        throw ConfigError("FitConfig: rates and step counts must be positive");
    if (mask_tau <= 0.0 || mask_tau >= 1.0) throw ConfigError("FitConfig: mask_tau in (0,1)");
}

double total_loss(const FitProblem& problem, const PoseParams& theta, const ShapeParams& beta,
                  const Camera& camera, const std::vector<uint8_t>* fixed_mask) {
    const BodyTemplate& tmpl = *problem.tmpl;
    PosedBody posed = pose_kernels(tmpl, theta, beta);
    CameraFramePosed<double> body =
        to_camera_frame<double>(posed, camera.rotation, camera.translation);
    std::vector<double> feats = expected_kernel_features<double>(*problem.bank, body.limb_dirs,
                                                                 tmpl.kernel_limb, *problem.bins);
    PosedBody cam_posed;
    cam_posed.means = body.means;
    cam_posed.precisions = body.precisions;
    Camera identity_cam = camera;
    identity_cam.rotation = Mat3d::identity();
    identity_cam.translation = Vec3d{};
    RenderOutput render = render_feature_map(cam_posed, feats, problem.bank->feature_dim,
                                             identity_cam, problem.render);
    std::vector<uint8_t> mask =
        fixed_mask ? *fixed_mask : foreground_mask(render, problem.config.mask_tau);
    double nll = image_nll(*problem.observed, render, mask, *problem.background,
                           problem.bank->fg_sigma, problem.config.robust_mode);
    return nll + pose_prior_term<double>(theta.joint_rotations, problem.prior,
                                         problem.config.prior_weight);
}

Gradients loss_and_gradient(const FitProblem& problem, const PoseParams& theta,
                            const ShapeParams& beta, const Camera& camera,
                            const std::vector<uint8_t>* fixed_mask) {
    const BodyTemplate& tmpl = *problem.tmpl;
    const KernelFeatureBank& bank = *problem.bank;
    const int n_joints = tmpl.num_joints;
    const int n_kernels = tmpl.num_kernels;
    const int n_shape = tmpl.num_shape_dims;
    const int d = bank.feature_dim;

    // --- stage 1: pose/shape/camera -> per-kernel intermediates, on one tape
    ad::Tape tape;
    std::vector<Vec3<Var>> theta_v(static_cast<std::size_t>(n_joints));
    for (int i = 0; i < n_joints; ++i) {
        const Vec3d& r = theta.joint_rotations[static_cast<std::size_t>(i)];
        theta_v[static_cast<std::size_t>(i)] = {Var::leaf(r.x, tape), Var::leaf(r.y, tape),
                                                Var::leaf(r.z, tape)};
    }
    Vec3<Var> trans_v{Var::leaf(theta.root_translation.x, tape),
                      Var::leaf(theta.root_translation.y, tape),
                      Var::leaf(theta.root_translation.z, tape)};
    std::vector<Var> beta_v(static_cast<std::size_t>(n_shape));
    for (int l = 0; l < n_shape; ++l)
        beta_v[static_cast<std::size_t>(l)] = Var::leaf(beta.coefficients[static_cast<std::size_t>(l)], tape);
    // camera perturbation about the current extrinsics
    Vec3<Var> cam_rot_v{Var::leaf(0.0, tape), Var::leaf(0.0, tape), Var::leaf(0.0, tape)};
    Vec3<Var> cam_trans_v{Var::leaf(0.0, tape), Var::leaf(0.0, tape), Var::leaf(0.0, tape)};
    const std::size_t leaf_count = tape.size();

    PosedBodyT<Var> posed = pose_kernels<Var>(tmpl, theta_v, trans_v, beta_v);
    Mat3<Var> rot = axis_angle_to_matrix(cam_rot_v) * to_scalar<Var>(camera.rotation);
    Vec3<Var> trans{camera.translation.x + cam_trans_v.x, camera.translation.y + cam_trans_v.y,
                    camera.translation.z + cam_trans_v.z};
    CameraFramePosed<Var> body_v = to_camera_frame<Var>(posed, rot, trans);
    std::vector<Var> feats_v =
        expected_kernel_features<Var>(bank, body_v.limb_dirs, tmpl.kernel_limb, *problem.bins);
    Var prior_v = pose_prior_term<Var>(theta_v, problem.prior, problem.config.prior_weight);

    // double snapshots + tape indices of the stage-1 outputs
    CameraFramePosed<double> body;
    body.means.resize(static_cast<std::size_t>(n_kernels));
    body.precisions.resize(static_cast<std::size_t>(n_kernels));
    std::vector<double> feats(static_cast<std::size_t>(n_kernels) * d);
    const int stride = 9 + d;
    std::vector<int32_t> out_idx(static_cast<std::size_t>(n_kernels) * stride, -1);
    for (int k = 0; k < n_kernels; ++k) {
        const Vec3<Var>& m = body_v.means[static_cast<std::size_t>(k)];
        const Mat3<Var>& p = body_v.precisions[static_cast<std::size_t>(k)];
        body.means[static_cast<std::size_t>(k)] = {m.x.v, m.y.v, m.z.v};
        Mat3d& pd = body.precisions[static_cast<std::size_t>(k)];
        for (int i = 0; i < 9; ++i) pd.m[i] = p.m[i].v;
        int32_t* idx = out_idx.data() + static_cast<std::size_t>(k) * stride;
        idx[0] = m.x.idx;
        idx[1] = m.y.idx;
        idx[2] = m.z.idx;
        idx[3] = p(0, 0).idx;
        idx[4] = p(0, 1).idx;
        idx[5] = p(0, 2).idx;
        idx[6] = p(1, 1).idx;
        idx[7] = p(1, 2).idx;
        idx[8] = p(2, 2).idx;
        for (int j = 0; j < d; ++j) {
            const Var& fv = feats_v[static_cast<std::size_t>(k) * d + j];
            feats[static_cast<std::size_t>(k) * d + j] = fv.v;
            idx[9 + j] = fv.idx;
        }
    }

    // --- stage 2: per-pixel rendering + NLL, parallel over rows
    const int h = camera.grid_height();
    const int w = camera.grid_width();
    const int n_pixels = h * w;
    const FeatureMap& obs = *problem.observed;
    if (obs.height != h || obs.width != w || obs.channels != d)
        throw ShapeError("loss_and_gradient: observation grid mismatch");
    const RenderParams& params = problem.render;
    const BackgroundModel& bg = *problem.background;
    const RobustMode mode = problem.config.robust_mode;
    const double tau = problem.config.mask_tau;

    std::vector<std::vector<double>> row_grad(static_cast<std::size_t>(h));
    std::vector<double> row_loss(static_cast<std::size_t>(h), 0.0);
    std::vector<uint8_t> mask(static_cast<std::size_t>(n_pixels), 0);

#pragma omp parallel for schedule(dynamic)
    for (int row = 0; row < h; ++row) {
        std::vector<double>& gbuf = row_grad[static_cast<std::size_t>(row)];
        gbuf.assign(static_cast<std::size_t>(n_kernels) * stride, 0.0);
        std::vector<int> active;
        std::vector<double> alphas;
        std::vector<double> feature(static_cast<std::size_t>(d));
        double loss = 0.0;
        for (int col = 0; col < w; ++col) {
            int p = row * w + col;
            Ray ray = camera_frame_ray(camera, row, col, params.t_near, params.t_far);
            std::fill(feature.begin(), feature.end(), 0.0);
            double opacity_sum = 0.0;
            render_ray_core<double>(body.means, body.precisions, feats, d, ray, params, active,
                                    alphas, feature.data(), opacity_sum);
            bool fg = fixed_mask ? (*fixed_mask)[static_cast<std::size_t>(p)] != 0
                                 : std::clamp(opacity_sum, 0.0, 1.0) > tau;
            mask[static_cast<std::size_t>(p)] = fg ? 1 : 0;
            const double* f = obs.pixel(p);
            double bgn = background_nll(f, bg, d);
            if (!fg) {
                loss += bgn;
                continue;
            }
            double fgn = foreground_nll<double>(f, feature.data(), d, bank.fg_sigma);
            loss += robust_pixel_nll<double>(fgn, bgn, mode);
            if (!active.empty())
                pixel_backward(active, body, feats, d, ray, params, f, bgn, mode, bank.fg_sigma,
                               gbuf.data());
        }
        row_loss[static_cast<std::size_t>(row)] = loss;
    }

    // deterministic row-order reduction
    std::vector<double> seed(static_cast<std::size_t>(n_kernels) * stride, 0.0);
    double pixel_loss = 0.0;
    for (int row = 0; row < h; ++row) {
        pixel_loss += row_loss[static_cast<std::size_t>(row)];
        const std::vector<double>& gbuf = row_grad[static_cast<std::size_t>(row)];
        for (std::size_t i = 0; i < seed.size(); ++i) seed[i] += gbuf[i];
    }

    // --- backward through stage 1
    std::vector<double> adjoint(tape.size(), 0.0);
    const double scale = 1.0 / n_pixels;
    for (std::size_t i = 0; i < seed.size(); ++i)
        if (out_idx[i] >= 0) adjoint[static_cast<std::size_t>(out_idx[i])] += scale * seed[i];
    if (prior_v.idx >= 0) adjoint[static_cast<std::size_t>(prior_v.idx)] += 1.0;
    tape.backward(adjoint);

    Gradients g;
    g.loss = pixel_loss * scale + prior_v.v;
    g.mask = std::move(mask);
    g.d_joint_rotations.resize(static_cast<std::size_t>(n_joints));
    std::size_t li = 0;
    for (int i = 0; i < n_joints; ++i) {
        g.d_joint_rotations[static_cast<std::size_t>(i)] = {adjoint[li], adjoint[li + 1],
                                                            adjoint[li + 2]};
        li += 3;
    }
    g.d_root_translation = {adjoint[li], adjoint[li + 1], adjoint[li + 2]};
    li += 3;
    g.d_shape.resize(static_cast<std::size_t>(n_shape));
    for (int l = 0; l < n_shape; ++l) g.d_shape[static_cast<std::size_t>(l)] = adjoint[li++];
    g.d_camera_rotation = {adjoint[li], adjoint[li + 1], adjoint[li + 2]};
    li += 3;
    g.d_camera_translation = {adjoint[li], adjoint[li + 1], adjoint[li + 2]};
    li += 3;
    (void)leaf_count;
    return g;
}

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
               double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || state.m.size() != params.size())
        throw ShapeError("adam_step: parameter/gradient size mismatch");
    state.step += 1;
    double bc1 = 1.0 - std::pow(beta1, state.step);
    double bc2 = 1.0 - std::pow(beta2, state.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

PoseParams flip_init_select(const FitProblem& problem, const PoseParams& theta,
                            const ShapeParams& beta, const Camera& camera, bool* flipped) {
    // 180 degrees about the camera y-axis, pre-composed into the root.
    Vec3d axis_world = camera.rotation.transpose() * Vec3d{0.0, M_PI, 0.0};
    Mat3d flip = axis_angle_to_matrix(axis_world);
    PoseParams alt = theta;
    alt.joint_rotations[0] =
        matrix_to_axis_angle(flip * axis_angle_to_matrix(theta.joint_rotations[0]));
    double base = total_loss(problem, theta, beta, camera);
    double alt_loss = total_loss(problem, alt, beta, camera);
    bool use_alt = alt_loss < base;  // tie goes to the input
    if (flipped) *flipped = use_alt;
    return use_alt ? alt : theta;
}

namespace {

struct FlatLayout {
    int n_joints, n_shape;
    bool with_shape, with_camera;

    std::size_t size() const {
        return static_cast<std::size_t>(3 * n_joints + 3) + (with_shape ? n_shape : 0) +
               (with_camera ? 6 : 0);
    }
};

void flatten_grads(const Gradients& g, const FlatLayout& lay, std::vector<double>& out) {
    out.clear();
    for (const Vec3d& v : g.d_joint_rotations) {
        out.push_back(v.x);
        out.push_back(v.y);
        out.push_back(v.z);
    }
    out.push_back(g.d_root_translation.x);
    out.push_back(g.d_root_translation.y);
    out.push_back(g.d_root_translation.z);
    if (lay.with_shape)
        for (double v : g.d_shape) out.push_back(v);
    if (lay.with_camera) {
        out.push_back(g.d_camera_rotation.x);
        out.push_back(g.d_camera_rotation.y);
        out.push_back(g.d_camera_rotation.z);
        out.push_back(g.d_camera_translation.x);
        out.push_back(g.d_camera_translation.y);
        out.push_back(g.d_camera_translation.z);
    }
}

}  // namespace

FitResult fit(const FitProblem& problem, const PoseParams& init_theta,
              const ShapeParams& init_beta, const Camera& init_camera) {
    const FitConfig& cfg = problem.config;
    cfg.validate();

    PoseParams theta = init_theta;
    theta.canonicalize();
    ShapeParams beta = init_beta;
    Camera camera = init_camera;

    FitResult result;
    if (cfg.flip_check) theta = flip_init_select(problem, theta, beta, camera, &result.flip_used);

    FlatLayout lay{problem.tmpl->num_joints, problem.tmpl->num_shape_dims, cfg.optimize_shape,
                   cfg.optimize_camera};
    AdamState adam;
    adam.init(lay.size());
    std::vector<double> grads_flat;

    double best_loss = std::numeric_limits<double>::infinity();
    PoseParams best_theta = theta;
    ShapeParams best_beta = beta;
    Camera best_camera = camera;

    int flat_steps_below_tol = 0;
    double prev_loss = std::numeric_limits<double>::quiet_NaN();

    for (int step = 0; step < cfg.max_steps; ++step) {
        Gradients g = loss_and_gradient(problem, theta, beta, camera);
        if (!std::isfinite(g.loss)) {
            if (step == 0) throw DivergenceError("fit: non-finite loss at initialization");
            break;
        }
        result.loss_trace.push_back(g.loss);
        result.steps_run = step + 1;
        if (g.loss < best_loss) {
            best_loss = g.loss;
            best_theta = theta;
            best_beta = beta;
            best_camera = camera;
        }
        if (step > 0) {
            double rel = std::abs(g.loss - prev_loss) / std::max(std::abs(prev_loss), 1e-12);
            flat_steps_below_tol = rel < cfg.convergence_tol ? flat_steps_below_tol + 1 : 0;
            if (flat_steps_below_tol >= 5) {
                result.converged = true;
                break;
            }
        }
        prev_loss = g.loss;

        // parameter update
        std::vector<double> params(lay.size(), 0.0);
        std::size_t o = 0;
        for (const Vec3d& v : theta.joint_rotations) {
            params[o++] = v.x;
            params[o++] = v.y;
            params[o++] = v.z;
        }
        params[o++] = theta.root_translation.x;
        params[o++] = theta.root_translation.y;
        params[o++] = theta.root_translation.z;
        if (lay.with_shape)
            for (double b : beta.coefficients) params[o++] = b;
        // camera coordinates are deltas about the current extrinsics (zero)
        flatten_grads(g, lay, grads_flat);
        adam_step(adam, params, grads_flat, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                  cfg.adam_eps);
        o = 0;
        for (Vec3d& v : theta.joint_rotations) {
            v.x = params[o++];
            v.y = params[o++];
            v.z = params[o++];
        }
        theta.root_translation = {params[o], params[o + 1], params[o + 2]};
        o += 3;
        if (lay.with_shape)
            for (double& b : beta.coefficients) b = params[o++];
        if (lay.with_camera) {
            Vec3d dr{params[o], params[o + 1], params[o + 2]};
            Vec3d dt{params[o + 3], params[o + 4], params[o + 5]};
            camera.rotation = axis_angle_to_matrix(dr) * camera.rotation;
            camera.translation += dt;
        }
    }

    result.theta = best_theta;
    result.theta.canonicalize();
    result.beta = best_beta;
    result.camera = best_camera;
    result.final_loss = best_loss;
    return result;
}

// --- Gradient verification ---------------------------------------------------

BodyTemplate make_chain_template(int num_kernels) {
    if (num_kernels < 3) throw ConfigError("make_chain_template: need at least 3 kernels");
    BodyTemplate t;
    t.num_joints = 3;
    t.num_kernels = num_kernels;
    t.num_shape_dims = 2;
    t.template_joints = {{0, 0, 0}, {0, 0.3, 0}, {0, 0.6, 0}};
    t.parents = {-1, 0, 1};
    t.joint_names = {"root", "mid", "tip"};
    t.limb_defs.assign(kNumLimbs, {0, 1});
    for (int l = 0; l < kNumLimbs; ++l)
        t.limb_defs[static_cast<std::size_t>(l)] = (l % 3 == 0)   ? std::pair<int, int>{0, 1}
                                                   : (l % 3 == 1) ? std::pair<int, int>{1, 2}
                                                                  : std::pair<int, int>{0, 2};
    t.torso_limb = 0;
    t.left_hip_joint = 0;
    t.right_hip_joint = 0;

    const Vec3d a{0, 0, 0}, c{0, 0.6, 0};
    t.blend_weights.assign(static_cast<std::size_t>(num_kernels) * 3, 0.0);
    t.kernel_limb.resize(static_cast<std::size_t>(num_kernels));
    std::vector<double> u(static_cast<std::size_t>(num_kernels));
    for (int k = 0; k < num_kernels; ++k) {
        double p = (k + 0.5) / num_kernels;
        u[static_cast<std::size_t>(k)] = p;
        t.rest_means.push_back(a + p * (c - a));
        Mat3d cov = Mat3d::zero();
        cov(0, 0) = 0.08 * 0.08;
        cov(1, 1) = 0.12 * 0.12;
        cov(2, 2) = 0.08 * 0.08;
        t.rest_covariances.push_back(cov);
        t.kernel_limb[static_cast<std::size_t>(k)] = p < 0.5 ? 0 : 1;
        // two bones: root drives the lower half, mid the upper; simple ramp
        double wb = std::clamp((p - 0.35) / 0.3, 0.0, 1.0);
        if (p < 0.5) {
            t.blend_weights[static_cast<std::size_t>(k) * 3 + 0] = 1.0 - 0.5 * wb;
            t.blend_weights[static_cast<std::size_t>(k) * 3 + 1] = 0.5 * wb;
        } else {
            double wc = std::clamp((p - 0.85) / 0.3, 0.0, 0.5);
            t.blend_weights[static_cast<std::size_t>(k) * 3 + 1] = 1.0 - wc;
            t.blend_weights[static_cast<std::size_t>(k) * 3 + 2] = wc;
        }
    }
    t.rest_precisions.resize(static_cast<std::size_t>(num_kernels));
    for (int k = 0; k < num_kernels; ++k)
        t.rest_precisions[static_cast<std::size_t>(k)] =
            inverse(t.rest_covariances[static_cast<std::size_t>(k)]);

    // exact joint regressor from two collinear kernels
    t.joint_regressor.assign(static_cast<std::size_t>(3) * num_kernels, 0.0);
    auto set_row = [&](int joint, double target) {
        int k1 = 0, k2 = num_kernels - 1;
        double w2 = (target - u[static_cast<std::size_t>(k1)]) /
                    (u[static_cast<std::size_t>(k2)] - u[static_cast<std::size_t>(k1)]);
        t.joint_regressor[static_cast<std::size_t>(joint) * num_kernels + k1] = 1.0 - w2;
        t.joint_regressor[static_cast<std::size_t>(joint) * num_kernels + k2] = w2;
    };
    set_row(0, 0.0);
    set_row(1, 0.5);
    set_row(2, 1.0);

    // shape: global scale and elongation along the chain
    t.shape_basis.assign(static_cast<std::size_t>(2) * num_kernels, Vec3d{});
    for (int k = 0; k < num_kernels; ++k) {
        t.shape_basis[static_cast<std::size_t>(k)] = 0.1 * t.rest_means[static_cast<std::size_t>(k)];
        t.shape_basis[static_cast<std::size_t>(num_kernels + k)] =
            Vec3d{0.0, 0.05 * u[static_cast<std::size_t>(k)], 0.0};
    }
    t.validate();
    return t;
}

GradientCheckReport check_gradients(int num_seeds, double tolerance, double fd_step,
                                    uint64_t base_seed) {
    GradientCheckReport report;
    if (num_seeds <= 0) return report;

    GradientCheckReport::Group theta_g{"theta", 0.0}, trans_g{"root_translation", 0.0},
        beta_g{"beta", 0.0}, cam_r_g{"camera_rotation", 0.0}, cam_t_g{"camera_translation", 0.0};

    for (int seed_i = 0; seed_i < num_seeds; ++seed_i) {
        std::mt19937_64 rng(base_seed + static_cast<uint64_t>(seed_i) * 7919 + 13);
        std::uniform_real_distribution<double> unif(-0.3, 0.3);
        std::normal_distribution<double> gauss(0.0, 1.0);

        BodyTemplate tmpl = make_chain_template(3 + static_cast<int>(rng() % 8));  // K in [3,10]
        const int d = 4;
        KernelFeatureBank bank = make_random_bank(tmpl.num_kernels, 4, d, rng());
        OrientationBins bins = make_orientation_bins(4, 5.0);
        BackgroundModel bg;
        bg.mean.assign(static_cast<std::size_t>(d), 0.0);
        bg.sigma = 1.0;

        Camera camera;
        camera.image_height = camera.image_width = 32;
        camera.feature_stride = 4;  // 8x8 grid
        camera.focal = 40.0;
        camera.principal_x = camera.principal_y = 16.0;
        camera.translation = {0.0, -0.3, 2.0};

        PoseParams theta = PoseParams::rest(tmpl.num_joints);
        for (auto& v : theta.joint_rotations) v = {unif(rng), unif(rng), unif(rng)};
        theta.root_translation = {0.1 * unif(rng), 0.1 * unif(rng), 0.1 * unif(rng)};
        ShapeParams beta = ShapeParams::zero(tmpl.num_shape_dims);
        for (auto& b : beta.coefficients) b = unif(rng);

        // observation: render a perturbed pose, add noise
        PoseParams gen = theta;
        for (auto& v : gen.joint_rotations) {
            v.x += 0.3 * unif(rng);
            v.y += 0.3 * unif(rng);
            v.z += 0.3 * unif(rng);
        }
        FitProblem problem;
        problem.tmpl = &tmpl;
        problem.bank = &bank;
        problem.bins = &bins;
        problem.background = &bg;
        problem.render.density_scale = 0.15;  // per-kernel ray mass near the alpha peak
        problem.render.t_near = 0.1;
        problem.render.t_far = 10.0;
        problem.prior = PosePrior::rest(tmpl.num_joints, 0.01);
        problem.config.mask_tau = 0.3;

        PosedBody gen_posed = pose_kernels(tmpl, gen, beta);
        CameraFramePosed<double> gen_body =
            to_camera_frame<double>(gen_posed, camera.rotation, camera.translation);
        std::vector<double> gen_feats = expected_kernel_features<double>(
            bank, gen_body.limb_dirs, tmpl.kernel_limb, bins);
        PosedBody gp;
        gp.means = gen_body.means;
        gp.precisions = gen_body.precisions;
        Camera idc = camera;
        idc.rotation = Mat3d::identity();
        idc.translation = Vec3d{};
        RenderOutput robs = render_feature_map(gp, gen_feats, d, idc, problem.render);
        FeatureMap obs;
        obs.height = robs.height;
        obs.width = robs.width;
        obs.channels = d;
        obs.data = robs.features;
        for (auto& x : obs.data) x += 0.05 * gauss(rng);
        problem.observed = &obs;

        Gradients g = loss_and_gradient(problem, theta, beta, camera);
        const std::vector<uint8_t> mask = g.mask;  // freeze the mask for the FD probe

        auto rel_err = [&](double analytic, double fd) {
            double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
            return std::abs(analytic - fd) / denom;
        };

        auto fd_probe = [&](auto&& apply) {
            PoseParams tp = theta;
            ShapeParams bp = beta;
            Camera cp = camera;
            apply(tp, bp, cp, fd_step);
            double up = total_loss(problem, tp, bp, cp, &mask);
            tp = theta;
            bp = beta;
            cp = camera;
            apply(tp, bp, cp, -fd_step);
            double dn = total_loss(problem, tp, bp, cp, &mask);
            return (up - dn) / (2.0 * fd_step);
        };

        for (int i = 0; i < tmpl.num_joints; ++i)
            for (int c = 0; c < 3; ++c) {
                double fd = fd_probe([&](PoseParams& tp, ShapeParams&, Camera&, double h) {
                    tp.joint_rotations[static_cast<std::size_t>(i)][c] += h;
                });
                theta_g.max_rel_error = std::max(
                    theta_g.max_rel_error,
                    rel_err(g.d_joint_rotations[static_cast<std::size_t>(i)][c], fd));
            }
        for (int c = 0; c < 3; ++c) {
            double fd = fd_probe([&](PoseParams& tp, ShapeParams&, Camera&, double h) {
                tp.root_translation[c] += h;
            });
            trans_g.max_rel_error =
                std::max(trans_g.max_rel_error, rel_err(g.d_root_translation[c], fd));
        }
        for (int l = 0; l < tmpl.num_shape_dims; ++l) {
            double fd = fd_probe([&](PoseParams&, ShapeParams& bp, Camera&, double h) {
                bp.coefficients[static_cast<std::size_t>(l)] += h;
            });
            beta_g.max_rel_error =
                std::max(beta_g.max_rel_error, rel_err(g.d_shape[static_cast<std::size_t>(l)], fd));
        }
        for (int c = 0; c < 3; ++c) {
            double fd = fd_probe([&](PoseParams&, ShapeParams&, Camera& cp, double h) {
                Vec3d dr{};
                dr[c] = h;
                cp.rotation = axis_angle_to_matrix(dr) * cp.rotation;
            });
            cam_r_g.max_rel_error =
                std::max(cam_r_g.max_rel_error, rel_err(g.d_camera_rotation[c], fd));
            fd = fd_probe([&](PoseParams&, ShapeParams&, Camera& cp, double h) {
                cp.translation[c] += h;
            });
            cam_t_g.max_rel_error =
                std::max(cam_t_g.max_rel_error, rel_err(g.d_camera_translation[c], fd));
        }
    }

    report.groups = {theta_g, trans_g, beta_g, cam_r_g, cam_t_g};
    for (const auto& grp : report.groups)
        report.max_rel_error = std::max(report.max_rel_error, grp.max_rel_error);
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace nbv
