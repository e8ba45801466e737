#include "nbv/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace nbv {

Vec3d matrix_to_axis_angle(const Mat3d& r) {
    double tr = r(0, 0) + r(1, 1) + r(2, 2);
    double cos_theta = std::clamp((tr - 1.0) * 0.5, -1.0, 1.0);
    Vec3d skew{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};

    if (cos_theta > 1.0 - 1e-10) {
        // theta ~ 0: skew vector is 2 sin(theta) * axis ~ 2 theta * axis
        return {0.5 * skew.x, 0.5 * skew.y, 0.5 * skew.z};
    }
    if (cos_theta < -1.0 + 1e-8) {
        // theta ~ pi: (R + R^T)/2 = (1 + cos) I + (1 - cos) a a^T, so the
        // symmetric part with the diagonal term removed is a clean outer product
        Mat3d b = 0.5 * (r + r.transpose());
        double diag = 1.0 - (1.0 + cos_theta);
        b(0, 0) += diag;
        b(1, 1) += diag;
        b(2, 2) += diag;
        int col = 0;
        if (b(1, 1) > b(col, col)) col = 1;
        if (b(2, 2) > b(col, col)) col = 2;
        Vec3d a{b(0, col), b(1, col), b(2, col)};
        double n = norm(a);
        a = (1.0 / n) * a;
        // fix the sign from the (tiny) skew part
        if (a.x * skew.x + a.y * skew.y + a.z * skew.z < 0.0) a = -a;
        // acos is ill-conditioned here; recover theta from |skew| = 2 sin(theta)
        double sin_theta = std::clamp(0.5 * norm(skew), 0.0, 1.0);
        double theta = M_PI - std::asin(sin_theta);
        return {theta * a.x, theta * a.y, theta * a.z};
    }
    double theta = std::acos(cos_theta);
    double s = theta / (2.0 * std::sin(theta));
    return {s * skew.x, s * skew.y, s * skew.z};
}

Vec3d canonicalize_axis_angle(const Vec3d& v) {
    double theta = norm(v);
    if (theta <= M_PI || theta < 1e-12) return v;
    double reduced = std::fmod(theta, 2.0 * M_PI);
    if (reduced > M_PI) reduced -= 2.0 * M_PI;  // may flip the axis sign
    double s = reduced / theta;
    return {s * v.x, s * v.y, s * v.z};
}

}  // namespace nbv
