#pragma once

#include <optional>
#include <vector>

#include "nbv/body_model.hpp"
#include "nbv/likelihood.hpp"
#include "nbv/renderer.hpp"

namespace nbv {

struct FitConfig {
    double learning_rate = 0.02;
    int max_steps = 80;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double prior_weight = 1.0;
    double convergence_tol = 1e-6;  // relative loss change, 5-step window
    bool flip_check = true;
    bool optimize_shape = true;
    bool optimize_camera = false;
    RobustMode robust_mode = RobustMode::kMarginal;
    double mask_tau = 0.5;

    void validate() const;
};

// Quadratic pose prior about a mean pose; root orientation and translation
// are excluded.
struct PosePrior {
    std::vector<Vec3d> mean_pose;  // N
    std::vector<double> weights;   // N, >= 0

    static PosePrior rest(int num_joints, double weight = 0.01) {
        PosePrior p;
        p.mean_pose.assign(static_cast<std::size_t>(num_joints), Vec3d{});
        p.weights.assign(static_cast<std::size_t>(num_joints), weight);
        return p;
    }
};

struct FitResult {
    PoseParams theta;
    ShapeParams beta;
    Camera camera;
    std::vector<double> loss_trace;
    double final_loss = 0.0;
    int steps_run = 0;
    bool flip_used = false;
    bool converged = false;
};

// Everything a fit needs besides the optimized parameters.
struct FitProblem {
    const BodyTemplate* tmpl = nullptr;
    const KernelFeatureBank* bank = nullptr;
    const OrientationBins* bins = nullptr;
    const BackgroundModel* background = nullptr;
    const FeatureMap* observed = nullptr;
    RenderParams render;
    PosePrior prior;
    FitConfig config;
};

struct Gradients {
    double loss = 0.0;
    std::vector<Vec3d> d_joint_rotations;  // N
    Vec3d d_root_translation{};
    std::vector<double> d_shape;  // L
    Vec3d d_camera_rotation{};    // axis-angle delta about the current extrinsics
    Vec3d d_camera_translation{};
    std::vector<uint8_t> mask;    // foreground mask used for this evaluation
};

// image NLL (mean per pixel) + prior_weight * sum_i w_i ||omega_i - mean_i||^2.
// If fixed_mask is given the foreground set is not recomputed (used by the
// finite-difference harness).
double total_loss(const FitProblem& problem, const PoseParams& theta, const ShapeParams& beta,
                  const Camera& camera, const std::vector<uint8_t>* fixed_mask = nullptr);

// Exact reverse-mode gradient of total_loss through rendering, vMF weights,
// LBS and FK. Mask membership is treated as constant.
Gradients loss_and_gradient(const FitProblem& problem, const PoseParams& theta,
                            const ShapeParams& beta, const Camera& camera,
                            const std::vector<uint8_t>* fixed_mask = nullptr);

// Textbook Adam with bias correction over a flat parameter vector.
struct AdamState {
    std::vector<double> m, v;
    int step = 0;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
               double lr, double beta1, double beta2, double eps);

// Evaluates the loss at theta and at theta with the root rotation
// pre-composed with a 180-degree rotation about the camera y-axis; returns
// the better pose (ties go to the input).
PoseParams flip_init_select(const FitProblem& problem, const PoseParams& theta,
                            const ShapeParams& beta, const Camera& camera, bool* flipped = nullptr);

FitResult fit(const FitProblem& problem, const PoseParams& init_theta,
              const ShapeParams& init_beta, const Camera& init_camera);

// --- Gradient verification ---------------------------------------------------

struct GradientCheckReport {
    struct Group {
        std::string name;
        double max_rel_error = 0.0;
    };
    std::vector<Group> groups;
    double max_rel_error = 0.0;
    bool passed = true;
};

// Compares analytic gradients against central finite differences (step
// `fd_step`) on randomized small scenes. Relative error uses an absolute
// floor of 1e-6 on the denominator.
GradientCheckReport check_gradients(int num_seeds, double tolerance, double fd_step = 1e-5,
                                    uint64_t base_seed = 0);

// Small 3-joint chain body used by the gradient checker (K kernels <= 10).
BodyTemplate make_chain_template(int num_kernels);

}  // namespace nbv
