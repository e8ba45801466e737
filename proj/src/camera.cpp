#include "nbv/camera.hpp"

#include <cmath>

namespace nbv {

void Camera::validate() const {
    if (focal <= 0.0) throw ValidationError("Camera: focal must be positive");
    if (feature_stride <= 0 || image_height % feature_stride != 0 ||
        image_width % feature_stride != 0)
        throw ValidationError("Camera: stride must divide the image size");
    Mat3d rrt = rotation * rotation.transpose();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (std::abs(rrt(i, j) - (i == j ? 1.0 : 0.0)) > 1e-9)
                throw ValidationError("Camera: rotation not orthonormal");
    if (std::abs(det(rotation) - 1.0) > 1e-9)
        throw ValidationError("Camera: rotation must have det +1");
}

Ray camera_frame_ray(const Camera& camera, int row, int col, double t_near, double t_far) {
    if (row < 0 || col < 0 || row >= camera.grid_height() || col >= camera.grid_width())
        throw ValidationError("ray_for_pixel: pixel outside the feature grid");
    double u = (col + 0.5) * camera.feature_stride;  // image x of the grid-cell center
    double v = (row + 0.5) * camera.feature_stride;
    Vec3d d{(u - camera.principal_x) / camera.focal, (v - camera.principal_y) / camera.focal, 1.0};
    d = (1.0 / norm(d)) * d;
    return Ray{Vec3d{}, d, t_near, t_far};
}

Ray ray_for_pixel(const Camera& camera, int row, int col, double t_near, double t_far) {
    Ray cam_ray = camera_frame_ray(camera, row, col, t_near, t_far);
    Mat3d rt = camera.rotation.transpose();
    Vec3d origin = -1.0 * (rt * camera.translation);
    return Ray{origin, rt * cam_ray.direction, t_near, t_far};
}

}  // namespace nbv
