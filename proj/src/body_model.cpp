#include "nbv/body_model.hpp"

#include <cmath>

namespace nbv {

namespace {

// 3x3 Cholesky as an SPD test.
bool is_spd(const Mat3d& a) {
    double l00 = a(0, 0);
    if (l00 <= 0.0) return false;
    l00 = std::sqrt(l00);
    double l10 = a(1, 0) / l00;
    double l20 = a(2, 0) / l00;
    double d1 = a(1, 1) - l10 * l10;
    if (d1 <= 0.0) return false;
    double l11 = std::sqrt(d1);
    double l21 = (a(2, 1) - l20 * l10) / l11;
    double d2 = a(2, 2) - l20 * l20 - l21 * l21;
    return d2 > 0.0;
}

}  // namespace

void BodyTemplate::validate() const {
    const std::size_t k = static_cast<std::size_t>(num_kernels);
    const std::size_t n = static_cast<std::size_t>(num_joints);
    if (rest_means.size() != k || rest_covariances.size() != k || rest_precisions.size() != k ||
        kernel_limb.size() != k || template_joints.size() != n || parents.size() != n ||
        blend_weights.size() != k * n || joint_regressor.size() != n * k ||
        shape_basis.size() != static_cast<std::size_t>(num_shape_dims) * k)
        throw ShapeError("BodyTemplate: inconsistent array sizes");
    if (limb_defs.size() != kNumLimbs)
        throw ValidationError("BodyTemplate: expected " + std::to_string(kNumLimbs) + " limbs");

    for (std::size_t i = 0; i < k; ++i) {
        const Mat3d& c = rest_covariances[i];
        for (int r = 0; r < 3; ++r)
            for (int cc = r + 1; cc < 3; ++cc)
                if (std::abs(c(r, cc) - c(cc, r)) > 1e-12)
                    throw ValidationError("BodyTemplate: rest covariance not symmetric");
        if (!is_spd(c)) throw ValidationError("BodyTemplate: rest covariance not SPD");
        if (kernel_limb[i] < 0 || kernel_limb[i] >= kNumLimbs)
            throw ValidationError("BodyTemplate: kernel_limb out of range");
    }

    for (std::size_t row = 0; row < k; ++row) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double w = blend_weights[row * n + j];
            if (w < 0.0) throw ValidationError("BodyTemplate: negative blend weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("BodyTemplate: blend-weight row does not sum to 1");
    }

    if (n == 0 || parents[0] != -1)
        throw ValidationError("BodyTemplate: joint 0 must be the single root");
    for (std::size_t j = 1; j < n; ++j)
        if (parents[j] < 0 || static_cast<std::size_t>(parents[j]) >= j)
            throw ValidationError("BodyTemplate: parents must form a tree ordered root-first");

    for (const auto& [a, b] : limb_defs)
        if (a < 0 || b < 0 || a >= num_joints || b >= num_joints || a == b)
            throw ValidationError("BodyTemplate: invalid limb definition");
    if (left_hip_joint < 0 || right_hip_joint < 0)
        throw ValidationError("BodyTemplate: hip joints not set");
}

void PoseParams::canonicalize() {
    for (auto& v : joint_rotations) v = canonicalize_axis_angle(v);
}

PosedBody pose_kernels(const BodyTemplate& tmpl, const PoseParams& theta, const ShapeParams& beta) {
    return pose_kernels<double>(tmpl, theta.joint_rotations, theta.root_translation,
                                beta.coefficients);
}

}  // namespace nbv
