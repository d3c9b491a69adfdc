#pragma once

// Rotation primitives shared by every layer. All Euler angles in the library
// use the intrinsic X-then-Y-then-Z convention: R = Rx(a) * Ry(b) * Rz(c).

#include <array>
#include <cmath>

#include "percap/core.hpp"

namespace percap {

template <typename Scalar>
Matrix3<Scalar> rotation_x(Scalar a) {
  using std::cos;
  using std::sin;
  Matrix3<Scalar> r;
  r << Scalar(1), Scalar(0), Scalar(0), Scalar(0), cos(a), -sin(a), Scalar(0), sin(a), cos(a);
  return r;
}

template <typename Scalar>
Matrix3<Scalar> rotation_y(Scalar a) {
  using std::cos;
  using std::sin;
  Matrix3<Scalar> r;
  r << cos(a), Scalar(0), sin(a), Scalar(0), Scalar(1), Scalar(0), -sin(a), Scalar(0), cos(a);
  return r;
}

template <typename Scalar>
Matrix3<Scalar> rotation_z(Scalar a) {
  using std::cos;
  using std::sin;
  Matrix3<Scalar> r;
  r << cos(a), -sin(a), Scalar(0), sin(a), cos(a), Scalar(0), Scalar(0), Scalar(0), Scalar(1);
  return r;
}

template <typename Derived>
Matrix3<typename Derived::Scalar> euler_to_rotation(const Eigen::MatrixBase<Derived>& angles) {
  using Scalar = typename Derived::Scalar;
  return rotation_x<Scalar>(angles(0)) * rotation_y<Scalar>(angles(1)) *
         rotation_z<Scalar>(angles(2));
}

/// Partial derivatives dR/da, dR/db, dR/dc of euler_to_rotation.
template <typename Derived>
std::array<Matrix3<typename Derived::Scalar>, 3> euler_rotation_derivatives(
    const Eigen::MatrixBase<Derived>& angles) {
  using Scalar = typename Derived::Scalar;
  using std::cos;
  using std::sin;
  const Matrix3<Scalar> rx = rotation_x<Scalar>(angles(0));
  const Matrix3<Scalar> ry = rotation_y<Scalar>(angles(1));
  const Matrix3<Scalar> rz = rotation_z<Scalar>(angles(2));
  // d/da R(a) = K * R(a) with K the cross-product matrix of the axis.
  Matrix3<Scalar> kx, ky, kz;
  kx << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  ky << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  kz << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  return {kx * rx * ry * rz, rx * ky * ry * rz, rx * ry * kz * rz};
}

/// Inverse of euler_to_rotation; b is returned in [-pi/2, pi/2].
template <typename Derived>
Vector3<typename Derived::Scalar> rotation_to_euler(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  using std::asin;
  using std::atan2;
  using std::clamp;
  // R = Rx Ry Rz gives r02 = sin b, r12 = -sin a cos b, r22 = cos a cos b,
  // r01 = -cos b sin c, r00 = cos b cos c.
  const Scalar sb = std::clamp(r(0, 2), Scalar(-1), Scalar(1));
  const Scalar b = asin(sb);
  Scalar a, c;
  if (std::abs(sb) < Scalar(1) - Scalar(1e-12)) {
    a = atan2(-r(1, 2), r(2, 2));
    c = atan2(-r(0, 1), r(0, 0));
  } else {
    a = atan2(r(2, 1), r(1, 1));
    c = Scalar(0);
  }
  return {a, b, c};
}

/// Rotation by `angle` about the unit vector `axis`.
template <typename Scalar>
Matrix3<Scalar> axis_angle_rotation(const Vector3<Scalar>& axis, Scalar angle) {
  return Eigen::AngleAxis<Scalar>(angle, axis).toRotationMatrix();
}

template <typename Scalar>
Matrix3<Scalar> cross_matrix(const Vector3<Scalar>& v) {
  Matrix3<Scalar> k;
  k << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return k;
}

/// Unit dual quaternion representing a rigid transform.
template <typename Scalar>
struct DualQuaternion {
  Eigen::Quaternion<Scalar> real{Scalar(1), Scalar(0), Scalar(0), Scalar(0)};
  Eigen::Quaternion<Scalar> dual{Scalar(0), Scalar(0), Scalar(0), Scalar(0)};

  static DualQuaternion from_rigid(const Matrix3<Scalar>& rotation,
                                   const Vector3<Scalar>& translation) {
    DualQuaternion q;
    q.real = Eigen::Quaternion<Scalar>(rotation).normalized();
    const Eigen::Quaternion<Scalar> t(Scalar(0), translation.x(), translation.y(),
                                      translation.z());
    q.dual = t * q.real;
    q.dual.coeffs() *= Scalar(0.5);
    return q;
  }

  Scalar real_norm() const { return q_norm(real); }

  /// Requires a unit real part.
  void to_rigid(Matrix3<Scalar>& rotation, Vector3<Scalar>& translation) const {
    rotation = real.toRotationMatrix();
    const Eigen::Quaternion<Scalar> t = dual * real.conjugate();
    translation = Scalar(2) * t.vec();
  }

 private:
  static Scalar q_norm(const Eigen::Quaternion<Scalar>& q) { return q.coeffs().norm(); }
};

}  // namespace percap
