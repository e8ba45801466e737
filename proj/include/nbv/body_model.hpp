#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nbv/errors.hpp"
#include "nbv/geometry.hpp"

namespace nbv {

inline constexpr int kNumLimbs = 9;

// Rest-pose Gaussian-kernel body: kernels, skeleton, blend weights, shape
// basis, joint regressor and limb assignments. Immutable after construction,
// shareable across threads.
struct BodyTemplate {
    int num_kernels = 0;     // K
    int num_joints = 0;      // N
    int num_shape_dims = 0;  // L

    std::vector<Vec3d> rest_means;        // K
    std::vector<Mat3d> rest_covariances;  // K, SPD
    std::vector<Mat3d> rest_precisions;   // K, cached inverses
    std::vector<double> blend_weights;    // K*N row-major, rows sum to 1
    std::vector<Vec3d> template_joints;   // N
    std::vector<int> parents;             // N, parents[0] == -1
    std::vector<Vec3d> shape_basis;       // L*K, S[l*K + k]
    std::vector<double> joint_regressor;  // N*K row-major, rows sum to 1
    std::vector<std::pair<int, int>> limb_defs;  // kNumLimbs ordered (i, j)
    std::vector<int> kernel_limb;                // K, limb id per kernel

    int torso_limb = 0;       // orientation origin replaced by mid-hip
    int left_hip_joint = -1;  // used for the torso mid-hip origin
    int right_hip_joint = -1;

    std::vector<std::string> joint_names;  // N, informational

    double blend_weight(int k, int i) const { return blend_weights[static_cast<std::size_t>(k) * num_joints + i]; }
    double regressor(int n, int k) const { return joint_regressor[static_cast<std::size_t>(n) * num_kernels + k]; }

    // Checks SPD covariances, blend-weight rows, tree structure, limb ids.
    void validate() const;
};

struct PoseParams {
    std::vector<Vec3d> joint_rotations;  // N axis-angle, index 0 = root
    Vec3d root_translation{};

    static PoseParams rest(int num_joints) {
        PoseParams p;
        p.joint_rotations.assign(static_cast<std::size_t>(num_joints), Vec3d{});
        return p;
    }

    // Clamps every axis-angle to magnitude <= pi (2pi-periodic reduction).
    void canonicalize();
};

struct ShapeParams {
    std::vector<double> coefficients;  // L

    static ShapeParams zero(int num_dims) {
        ShapeParams s;
        s.coefficients.assign(static_cast<std::size_t>(num_dims), 0.0);
        return s;
    }
};

template <class T>
struct PosedBodyT {
    std::vector<Vec3<T>> means;              // K
    std::vector<Mat3<T>> precisions;         // K, SPD
    std::vector<Rigid<T>> joint_transforms;  // N, rest -> posed (G_i)
    std::vector<Vec3<T>> joints;             // N posed positions
    std::vector<Vec3<T>> limb_orientations;  // kNumLimbs unit vectors
};

using PosedBody = PosedBodyT<double>;

// --- Templated kinematics -------------------------------------------------
//
// The same code path serves the double-precision renderer and the autodiff
// tape used by the fitter.

template <class T>
std::vector<Rigid<T>> forward_kinematics(const std::vector<Vec3<T>>& joint_rotations,
                                         const Vec3<T>& root_translation,
                                         const std::vector<Vec3<T>>& template_joints,
                                         const std::vector<int>& parents) {
    const std::size_t n = template_joints.size();
    if (joint_rotations.size() != n || parents.size() != n)
        throw ShapeError("forward_kinematics: size mismatch");
    if (n == 0 || parents[0] != -1)
        throw ValidationError("forward_kinematics: joint 0 must be the root");

    std::vector<Mat3<T>> rot(n);       // accumulated rotation R_i
    std::vector<Vec3<T>> pos(n);       // posed joint position
    std::vector<Rigid<T>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Mat3<T> local = axis_angle_to_matrix(joint_rotations[i]);
        Vec3<T> tj = template_joints[i];
        if (parents[i] < 0) {
            rot[i] = local;
            pos[i] = tj + root_translation;
        } else {
            std::size_t p = static_cast<std::size_t>(parents[i]);
            if (p >= i) throw ValidationError("forward_kinematics: parents must precede children");
            rot[i] = rot[p] * local;
            pos[i] = pos[p] + rot[p] * (tj - template_joints[p]);
        }
        out[i].rot = rot[i];
        out[i].trans = pos[i] - rot[i] * tj;
    }
    return out;
}

template <class T>
std::vector<Vec3<T>> regress_joints(const std::vector<Vec3<T>>& kernel_positions,
                                    const std::vector<double>& regressor, int num_joints) {
    const std::size_t k = kernel_positions.size();
    if (regressor.size() != static_cast<std::size_t>(num_joints) * k)
        throw ShapeError("regress_joints: regressor shape mismatch");
    std::vector<Vec3<T>> joints(static_cast<std::size_t>(num_joints));
    for (int n = 0; n < num_joints; ++n) {
        Vec3<T> acc{};
        for (std::size_t j = 0; j < k; ++j) {
            double w = regressor[static_cast<std::size_t>(n) * k + j];
            if (w != 0.0) acc += w * kernel_positions[j];
        }
        joints[static_cast<std::size_t>(n)] = acc;
    }
    return joints;
}

template <class T>
std::vector<Vec3<T>> limb_orientations(const std::vector<Vec3<T>>& joints,
                                       const std::vector<std::pair<int, int>>& limb_defs,
                                       int torso_limb, int left_hip, int right_hip) {
    std::vector<Vec3<T>> out(limb_defs.size());
    for (std::size_t l = 0; l < limb_defs.size(); ++l) {
        Vec3<T> origin = joints[static_cast<std::size_t>(limb_defs[l].first)];
        if (static_cast<int>(l) == torso_limb)
            origin = 0.5 * (joints[static_cast<std::size_t>(left_hip)] +
                            joints[static_cast<std::size_t>(right_hip)]);
        Vec3<T> d = joints[static_cast<std::size_t>(limb_defs[l].second)] - origin;
        T len = norm(d);
        if (value_of(len) < 1e-8)
            throw MathError("limb_orientations: degenerate limb " + std::to_string(l));
        out[l] = (T(1) / len) * d;
    }
    return out;
}

template <class T>
PosedBodyT<T> pose_kernels(const BodyTemplate& tmpl, const std::vector<Vec3<T>>& joint_rotations,
                           const Vec3<T>& root_translation, const std::vector<T>& shape) {
    const int K = tmpl.num_kernels;
    const int N = tmpl.num_joints;
    if (static_cast<int>(shape.size()) != tmpl.num_shape_dims)
        throw ShapeError("pose_kernels: shape coefficient count mismatch");
    if (static_cast<int>(joint_rotations.size()) != N)
        throw ShapeError("pose_kernels: joint rotation count mismatch");

    // Shape displacement of the rest kernels.
    std::vector<Vec3<T>> shaped(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        Vec3<T> m{T(tmpl.rest_means[k].x), T(tmpl.rest_means[k].y), T(tmpl.rest_means[k].z)};
        for (int l = 0; l < tmpl.num_shape_dims; ++l) {
            const Vec3d& s = tmpl.shape_basis[static_cast<std::size_t>(l) * K + k];
            m += shape[static_cast<std::size_t>(l)] * Vec3<T>{T(s.x), T(s.y), T(s.z)};
        }
        shaped[static_cast<std::size_t>(k)] = m;
    }

    // Shape-consistent template joints, then FK.
    std::vector<Vec3<T>> shaped_joints = regress_joints<T>(shaped, tmpl.joint_regressor, N);
    std::vector<Rigid<T>> transforms =
        forward_kinematics(joint_rotations, root_translation, shaped_joints, tmpl.parents);

    PosedBodyT<T> out;
    out.joint_transforms = transforms;
    out.joints.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
        out.joints[static_cast<std::size_t>(i)] =
            transforms[static_cast<std::size_t>(i)].apply(shaped_joints[static_cast<std::size_t>(i)]);

    out.means.resize(static_cast<std::size_t>(K));
    out.precisions.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        Vec3<T> mean{};
        Mat3<T> prec = Mat3<T>::zero();
        const Mat3d& rest_prec = tmpl.rest_precisions[static_cast<std::size_t>(k)];
        for (int i = 0; i < N; ++i) {
            double w = tmpl.blend_weight(k, i);
            if (w == 0.0) continue;
            const Rigid<T>& g = transforms[static_cast<std::size_t>(i)];
            mean += w * g.apply(shaped[static_cast<std::size_t>(k)]);
            // Precision conjugated by the accumulated joint rotation.
            Mat3<T> rp;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    rp(r, c) = g.rot(r, 0) * rest_prec(0, c) + g.rot(r, 1) * rest_prec(1, c) +
                               g.rot(r, 2) * rest_prec(2, c);
            Mat3<T> conj = rp * g.rot.transpose();
            for (int e = 0; e < 9; ++e) prec.m[e] = prec.m[e] + w * conj.m[e];
        }
        out.means[static_cast<std::size_t>(k)] = mean;
        out.precisions[static_cast<std::size_t>(k)] = prec;
    }

    out.limb_orientations = limb_orientations<T>(out.joints, tmpl.limb_defs, tmpl.torso_limb,
                                                 tmpl.left_hip_joint, tmpl.right_hip_joint);
    return out;
}

// Double-precision convenience wrapper with template validation.
PosedBody pose_kernels(const BodyTemplate& tmpl, const PoseParams& theta, const ShapeParams& beta);

// --- Stick-figure template builder ----------------------------------------

struct StickTemplateConfig {
    int kernels_per_limb = 16;
    int head_kernels = 6;
    double limb_radius = 0.055;       // lateral kernel std, meters
    double torso_radius = 0.11;
    double kernel_overlap = 1.0;      // axial std = overlap * spacing / 2
    double blend_zone = 0.3;          // fraction of the bone over which weights blend
    double scale = 1.0;               // global skeleton scale

    int total_kernels() const { return kNumLimbs * kernels_per_limb + head_kernels; }
};

// Deterministic procedural body: 16 joints, 9 limbs, 2 shape directions
// (global scale, limb elongation). The joint regressor reproduces the
// construction joints exactly.
BodyTemplate make_stick_template(const StickTemplateConfig& config = {});

// Joint indices of the stick skeleton.
enum StickJoint : int {
    kPelvis = 0,
    kSpine = 1,
    kNeck = 2,
    kHeadTop = 3,
    kLeftHip = 4,
    kLeftKnee = 5,
    kLeftAnkle = 6,
    kRightHip = 7,
    kRightKnee = 8,
    kRightAnkle = 9,
    kLeftShoulder = 10,
    kLeftElbow = 11,
    kLeftWrist = 12,
    kRightShoulder = 13,
    kRightElbow = 14,
    kRightWrist = 15,
    kStickJointCount = 16
};

}  // namespace nbv
