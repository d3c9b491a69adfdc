#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace percap {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Vec2 = Vector2<double>;
using Vec3 = Vector3<double>;
using Mat3 = Matrix3<double>;
using Mat4 = Eigen::Matrix4d;
using VecX = VectorX<double>;
using MatX = Eigen::MatrixXd;
/// N x 3 row-major point array; row i is point i.
using Points = MatrixX3<double>;

/// Row-major image; row = y (top to bottom), column = x.
template <typename T>
using Image = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mask = Image<std::uint8_t>;
using DepthMap = Image<double>;
/// Per-pixel Euclidean distance in pixel units.
using DistanceImage = Image<float>;

/// Rigid transform x -> rotation * x + translation.
struct Rigid {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Rigid operator*(const Rigid& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Rigid inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConstructionError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class DegenerateBlend : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

/// File could not be parsed or violates an invariant; message names the field.
class LoadError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public LoadError {
 public:
  using LoadError::LoadError;
};

void warn(const std::string& message);

}  // namespace percap
