#include <array>
#include <cmath>

#include "nbv/body_model.hpp"

namespace nbv {

namespace {

// Orthonormal frame with the z-axis along dir.
Mat3d frame_from_axis(const Vec3d& dir) {
    Vec3d z = (1.0 / norm(dir)) * dir;
    Vec3d up = std::abs(z.y) < 0.9 ? Vec3d{0, 1, 0} : Vec3d{1, 0, 0};
    Vec3d x = cross(up, z);
    x = (1.0 / norm(x)) * x;
    Vec3d y = cross(z, x);
    Mat3d r;
    for (int i = 0; i < 3; ++i) {
        r(i, 0) = x[i];
        r(i, 1) = y[i];
        r(i, 2) = z[i];
    }
    return r;
}

Mat3d prolate_covariance(const Vec3d& dir, double radial_std, double axial_std) {
    Mat3d r = frame_from_axis(dir);
    Mat3d d = Mat3d::zero();
    d(0, 0) = radial_std * radial_std;
    d(1, 1) = radial_std * radial_std;
    d(2, 2) = axial_std * axial_std;
    return r * d * r.transpose();
}

Mat3d invert_spd(const Mat3d& c) { return inverse(c); }

struct Segment {
    int joint_a, joint_b;   // geometric endpoints of the kernel line
    int bone_a, bone_b;     // skinning pair: driver joint and distal blend joint
    int limb;               // limb id for the vMF assignment
    int count;              // kernels on this segment
    double radius;
};

}  // namespace

BodyTemplate make_stick_template(const StickTemplateConfig& config) {
    if (config.kernels_per_limb < 2 || config.head_kernels < 2)
        throw ConfigError("make_stick_template: need at least 2 kernels per segment");
    if (config.limb_radius <= 0.0 || config.torso_radius <= 0.0 || config.scale <= 0.0 ||
        config.kernel_overlap <= 0.0)
        throw ConfigError("make_stick_template: radii, overlap and scale must be positive");

    const double s = config.scale;
    BodyTemplate t;
    t.num_joints = kStickJointCount;
    t.num_shape_dims = 2;
    t.left_hip_joint = kLeftHip;
    t.right_hip_joint = kRightHip;
    t.torso_limb = 0;

    t.template_joints = {
        {0.00, 0.00, 0.00},    // pelvis
        {0.00, 0.25, 0.00},    // spine
        {0.00, 0.50, 0.00},    // neck
        {0.00, 0.72, 0.00},    // head top
        {0.10, -0.06, 0.00},   // left hip
        {0.10, -0.50, 0.00},   // left knee
        {0.10, -0.92, 0.00},   // left ankle
        {-0.10, -0.06, 0.00},  // right hip
        {-0.10, -0.50, 0.00},  // right knee
        {-0.10, -0.92, 0.00},  // right ankle
        {0.18, 0.42, 0.00},    // left shoulder
        {0.44, 0.42, 0.00},    // left elbow
        {0.70, 0.42, 0.00},    // left wrist
        {-0.18, 0.42, 0.00},   // right shoulder
        {-0.44, 0.42, 0.00},   // right elbow
        {-0.70, 0.42, 0.00},   // right wrist
    };
    for (auto& j : t.template_joints) j = s * j;

    t.parents = {-1,     kPelvis, kSpine,        kNeck,      kPelvis,       kLeftHip,
                 kLeftKnee, kPelvis, kRightHip,  kRightKnee, kNeck,         kLeftShoulder,
                 kLeftElbow, kNeck,  kRightShoulder, kRightElbow};

    t.joint_names = {"pelvis",     "spine",      "neck",        "head_top",
                     "l_hip",      "l_knee",     "l_ankle",     "r_hip",
                     "r_knee",     "r_ankle",    "l_shoulder",  "l_elbow",
                     "l_wrist",    "r_shoulder", "r_elbow",     "r_wrist"};

    // Limb 0 is the torso (mid-hip -> neck orientation rule).
    t.limb_defs = {{kPelvis, kNeck},          {kLeftShoulder, kLeftElbow},
                   {kLeftElbow, kLeftWrist},  {kRightShoulder, kRightElbow},
                   {kRightElbow, kRightWrist}, {kLeftHip, kLeftKnee},
                   {kLeftKnee, kLeftAnkle},   {kRightHip, kRightKnee},
                   {kRightKnee, kRightAnkle}};

    const int npl = config.kernels_per_limb;
    // Torso geometry runs pelvis -> neck, split in skinning over the
    // pelvis-spine and spine-neck bones by placing two half-segments.
    const int torso_lower = npl / 2;
    const int torso_upper = npl - torso_lower;
    std::vector<Segment> segments = {
        {kPelvis, kSpine, kPelvis, kSpine, 0, torso_lower, config.torso_radius},
        {kSpine, kNeck, kSpine, kNeck, 0, torso_upper, config.torso_radius},
        {kLeftShoulder, kLeftElbow, kLeftShoulder, kLeftElbow, 1, npl, config.limb_radius},
        {kLeftElbow, kLeftWrist, kLeftElbow, kLeftWrist, 2, npl, config.limb_radius},
        {kRightShoulder, kRightElbow, kRightShoulder, kRightElbow, 3, npl, config.limb_radius},
        {kRightElbow, kRightWrist, kRightElbow, kRightWrist, 4, npl, config.limb_radius},
        {kLeftHip, kLeftKnee, kLeftHip, kLeftKnee, 5, npl, config.limb_radius},
        {kLeftKnee, kLeftAnkle, kLeftKnee, kLeftAnkle, 6, npl, config.limb_radius},
        {kRightHip, kRightKnee, kRightHip, kRightKnee, 7, npl, config.limb_radius},
        {kRightKnee, kRightAnkle, kRightKnee, kRightAnkle, 8, npl, config.limb_radius},
        // Head kernels belong to the torso limb.
        {kNeck, kHeadTop, kNeck, kHeadTop, 0, config.head_kernels, 0.8 * config.torso_radius},
    };

    t.num_kernels = config.total_kernels();
    const int K = t.num_kernels;
    const int N = t.num_joints;
    t.blend_weights.assign(static_cast<std::size_t>(K) * N, 0.0);
    t.joint_regressor.assign(static_cast<std::size_t>(N) * K, 0.0);
    t.shape_basis.assign(static_cast<std::size_t>(2) * K, Vec3d{});

    // first kernel index and spacing per segment, for the joint regressor
    std::vector<int> seg_first(segments.size());

    int k = 0;
    for (std::size_t si = 0; si < segments.size(); ++si) {
        const Segment& seg = segments[si];
        seg_first[si] = k;
        Vec3d a = t.template_joints[static_cast<std::size_t>(seg.joint_a)];
        Vec3d b = t.template_joints[static_cast<std::size_t>(seg.joint_b)];
        Vec3d dir = b - a;
        double len = norm(dir);
        double axial = config.kernel_overlap * len / (2.0 * seg.count);
        for (int i = 0; i < seg.count; ++i, ++k) {
            double u = (i + 0.5) / seg.count;
            t.rest_means.push_back(a + u * dir);
            t.rest_covariances.push_back(prolate_covariance(dir, seg.radius * s, axial));
            t.kernel_limb.push_back(seg.limb);

            // Driver joint with a linear blend toward the distal joint.
            double z = config.blend_zone;
            double wb = 0.0;
            if (u > 1.0 - z) wb = 0.5 * (u - (1.0 - z)) / z;
            t.blend_weights[static_cast<std::size_t>(k) * N + seg.bone_a] = 1.0 - wb;
            t.blend_weights[static_cast<std::size_t>(k) * N + seg.bone_b] = wb;
        }
    }

    t.rest_precisions.resize(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) t.rest_precisions[static_cast<std::size_t>(i)] = invert_spd(t.rest_covariances[static_cast<std::size_t>(i)]);

    // Joint regressor: every joint is an exact affine combination of two
    // kernels on an adjacent segment (kernels sit at u = (i+0.5)/count).
    auto set_regressor = [&](int joint, std::size_t si, double target_u) {
        const Segment& seg = segments[si];
        int first = seg_first[si];
        double u1, u2;
        int k1, k2;
        if (target_u <= 0.5) {
            k1 = first;
            k2 = first + 1;
        } else {
            k1 = first + seg.count - 2;
            k2 = first + seg.count - 1;
        }
        u1 = (k1 - first + 0.5) / seg.count;
        u2 = (k2 - first + 0.5) / seg.count;
        double w2 = (target_u - u1) / (u2 - u1);
        double w1 = 1.0 - w2;
        t.joint_regressor[static_cast<std::size_t>(joint) * K + k1] = w1;
        t.joint_regressor[static_cast<std::size_t>(joint) * K + k2] = w2;
    };

    set_regressor(kPelvis, 0, 0.0);
    set_regressor(kSpine, 0, 1.0);  // spine = end of the lower torso segment
    set_regressor(kNeck, 1, 1.0);
    set_regressor(kHeadTop, 10, 1.0);
    set_regressor(kLeftShoulder, 2, 0.0);
    set_regressor(kLeftElbow, 3, 0.0);
    set_regressor(kLeftWrist, 3, 1.0);
    set_regressor(kRightShoulder, 4, 0.0);
    set_regressor(kRightElbow, 5, 0.0);
    set_regressor(kRightWrist, 5, 1.0);
    set_regressor(kLeftHip, 6, 0.0);
    set_regressor(kLeftKnee, 7, 0.0);
    set_regressor(kLeftAnkle, 7, 1.0);
    set_regressor(kRightHip, 8, 0.0);
    set_regressor(kRightKnee, 9, 0.0);
    set_regressor(kRightAnkle, 9, 1.0);

    // Shape basis. Direction 0: global scale about the pelvis. Direction 1:
    // arm/leg elongation away from the limb-chain root (shoulder or hip).
    const Vec3d pelvis = t.template_joints[kPelvis];
    k = 0;
    for (const Segment& seg : segments) {
        Vec3d chain_root;
        bool elongate = false;
        switch (seg.limb) {
            case 1:
            case 2:
                chain_root = t.template_joints[kLeftShoulder];
                elongate = true;
                break;
            case 3:
            case 4:
                chain_root = t.template_joints[kRightShoulder];
                elongate = true;
                break;
            case 5:
            case 6:
                chain_root = t.template_joints[kLeftHip];
                elongate = true;
                break;
            case 7:
            case 8:
                chain_root = t.template_joints[kRightHip];
                elongate = true;
                break;
            default:
                break;
        }
        for (int i = 0; i < seg.count; ++i, ++k) {
            const Vec3d& m = t.rest_means[static_cast<std::size_t>(k)];
            t.shape_basis[static_cast<std::size_t>(k)] = 0.1 * (m - pelvis);
            if (elongate)
                t.shape_basis[static_cast<std::size_t>(K + k)] = 0.1 * (m - chain_root);
        }
    }

    t.validate();
    return t;
}

}  // namespace nbv
