#pragma once

#include "nbv/errors.hpp"
#include "nbv/geometry.hpp"

namespace nbv {

// Pinhole camera. world -> camera: X_c = R X_w + t, z forward.
struct Camera {
    double focal = 1000.0;                // pixels
    double principal_x = 112.0, principal_y = 112.0;
    Mat3d rotation = Mat3d::identity();
    Vec3d translation{};
    int image_height = 224, image_width = 224;
    int feature_stride = 4;

    int grid_height() const { return image_height / feature_stride; }
    int grid_width() const { return image_width / feature_stride; }

    void validate() const;

    Vec3d world_to_camera(const Vec3d& x) const { return rotation * x + translation; }

    // Projects a world point to image pixel coordinates (col, row).
    Vec3<double> project(const Vec3d& x) const {
        Vec3d c = world_to_camera(x);
        return {focal * c.x / c.z + principal_x, focal * c.y / c.z + principal_y, c.z};
    }
};

struct Ray {
    Vec3d origin{};
    Vec3d direction{0, 0, 1};  // unit
    double t_near = 0.1, t_far = 20.0;
};

// Ray through the center of a feature-grid pixel, in world coordinates.
Ray ray_for_pixel(const Camera& camera, int row, int col, double t_near = 0.1,
                  double t_far = 20.0);

// Same ray expressed in the camera frame (origin at 0); used by the fitter,
// which folds the extrinsics into the kernel transforms instead.
Ray camera_frame_ray(const Camera& camera, int row, int col, double t_near, double t_far);

}  // namespace nbv
