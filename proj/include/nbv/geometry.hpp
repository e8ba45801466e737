#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace nbv {

// Small fixed-size linear algebra, templated on the scalar so the same
// kinematics/rendering code runs on plain doubles and on autodiff variables.

template <class T>
struct Vec3 {
    T x{}, y{}, z{};

    Vec3() = default;
    Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

    T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) {
        x = x + o.x;
        y = y + o.y;
        z = z + o.z;
        return *this;
    }

    template <class S>
    friend Vec3 operator*(const S& s, const Vec3& v) {
        return {s * v.x, s * v.y, s * v.z};
    }
};

template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
T squared_norm(const Vec3<T>& v) {
    return dot(v, v);
}

template <class T>
T norm(const Vec3<T>& v) {
    using std::sqrt;
    return sqrt(dot(v, v));
}

// Row-major 3x3 matrix.
template <class T>
struct Mat3 {
    std::array<T, 9> m{};

    T& operator()(int r, int c) { return m[3 * r + c]; }
    const T& operator()(int r, int c) const { return m[3 * r + c]; }

    static Mat3 identity() {
        Mat3 I;
        I.m[0] = T(1);
        I.m[4] = T(1);
        I.m[8] = T(1);
        return I;
    }

    static Mat3 zero() { return Mat3{}; }

    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
        return r;
    }

    Mat3 operator-(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] - o.m[i];
        return r;
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) +
                          (*this)(i, 2) * o(2, j);
        return r;
    }

    Vec3<T> operator*(const Vec3<T>& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 transpose() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    template <class S>
    friend Mat3 operator*(const S& s, const Mat3& a) {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = s * a.m[i];
        return r;
    }
};

template <class T>
T det(const Mat3<T>& a) {
    return a.m[0] * (a.m[4] * a.m[8] - a.m[5] * a.m[7]) -
           a.m[1] * (a.m[3] * a.m[8] - a.m[5] * a.m[6]) +
           a.m[2] * (a.m[3] * a.m[7] - a.m[4] * a.m[6]);
}

template <class T>
Mat3<T> inverse(const Mat3<T>& a) {
    Mat3<T> r;
    r.m[0] = a.m[4] * a.m[8] - a.m[5] * a.m[7];
    r.m[1] = a.m[2] * a.m[7] - a.m[1] * a.m[8];
    r.m[2] = a.m[1] * a.m[5] - a.m[2] * a.m[4];
    r.m[3] = a.m[5] * a.m[6] - a.m[3] * a.m[8];
    r.m[4] = a.m[0] * a.m[8] - a.m[2] * a.m[6];
    r.m[5] = a.m[2] * a.m[3] - a.m[0] * a.m[5];
    r.m[6] = a.m[3] * a.m[7] - a.m[4] * a.m[6];
    r.m[7] = a.m[1] * a.m[6] - a.m[0] * a.m[7];
    r.m[8] = a.m[0] * a.m[4] - a.m[1] * a.m[3];
    T d = det(a);
    T inv_d = T(1) / d;
    for (int i = 0; i < 9; ++i) r.m[i] = inv_d * r.m[i];
    return r;
}

// A Rᵀ A' R style conjugation: R * A * Rᵀ.
template <class T>
Mat3<T> conjugate(const Mat3<T>& rot, const Mat3<T>& a) {
    return rot * a * rot.transpose();
}

// Rigid transform x -> R x + t.
template <class T>
struct Rigid {
    Mat3<T> rot = Mat3<T>::identity();
    Vec3<T> trans{};

    Vec3<T> apply(const Vec3<T>& x) const { return rot * x + trans; }

    Rigid compose(const Rigid& o) const {
        // (*this) after o: x -> R (Ro x + to) + t
        return {rot * o.rot, rot * o.trans + trans};
    }
};

inline double value_of(double x) { return x; }

// Rodrigues formula. Uses the series form below angle ~1e-6 so that the map
// stays smooth through zero for autodiff scalars.
template <class T>
Mat3<T> axis_angle_to_matrix(const Vec3<T>& v) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    T theta2 = squared_norm(v);
    Mat3<T> K;
    K(0, 1) = -v.z;
    K(0, 2) = v.y;
    K(1, 0) = v.z;
    K(1, 2) = -v.x;
    K(2, 0) = -v.y;
    K(2, 1) = v.x;
    Mat3<T> K2 = K * K;
    T a, b;  // R = I + a K + b K^2
    if (value_of(theta2) < 1e-12) {
        // sin(t)/t and (1-cos t)/t^2 series
        a = T(1) - theta2 * (1.0 / 6.0);
        b = T(0.5) - theta2 * (1.0 / 24.0);
    } else {
        T theta = sqrt(theta2);
        a = sin(theta) / theta;
        b = (T(1) - cos(theta)) / theta2;
    }
    Mat3<T> r = Mat3<T>::identity();
    for (int i = 0; i < 9; ++i) r.m[i] = r.m[i] + a * K.m[i] + b * K2.m[i];
    return r;
}

// Inverse of axis_angle_to_matrix, result magnitude in [0, pi].
Vec3<double> matrix_to_axis_angle(const Mat3<double>& r);

// Canonicalize an axis-angle vector to magnitude <= pi.
Vec3<double> canonicalize_axis_angle(const Vec3<double>& v);

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;
using Rigidd = Rigid<double>;

}  // namespace nbv
