#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pmesh {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
Mat3<Scalar> skew(const Vec3<Scalar>& v) {
  Mat3<Scalar> k;
  k << Scalar(0), -v.z(), v.y(),
       v.z(), Scalar(0), -v.x(),
       -v.y(), v.x(), Scalar(0);
  return k;
}

namespace detail {

// R = I + a K + b K^2 with a = sin t / t, b = (1 - cos t) / t^2.
template <typename Scalar>
void rodrigues_coeffs(Scalar t, Scalar& a, Scalar& b) {
  if (t < Scalar(1e-7)) {
    const Scalar t2 = t * t;
    a = Scalar(1) - t2 / Scalar(6);
    b = Scalar(0.5) - t2 / Scalar(24);
  } else {
    const Scalar h = std::sin(t / Scalar(2)) / t;
    a = std::sin(t) / t;
    b = Scalar(2) * h * h;  // (1 - cos t) / t^2 without cancellation
  }
}

// (da/dt)/t and (db/dt)/t; series below 1e-2 where the closed forms cancel.
template <typename Scalar>
void rodrigues_coeff_derivs(Scalar t, Scalar& da, Scalar& db) {
  const Scalar t2 = t * t;
  if (t < Scalar(1e-2)) {
    da = Scalar(-1) / Scalar(3) + t2 / Scalar(30) - t2 * t2 / Scalar(840);
    db = Scalar(-1) / Scalar(12) + t2 / Scalar(180) - t2 * t2 / Scalar(6720);
  } else {
    const Scalar s = std::sin(t), c = std::cos(t);
    da = (t * c - s) / (t2 * t);
    db = (t * s - Scalar(2) * (Scalar(1) - c)) / (t2 * t2);
  }
}

}  // namespace detail

/// Axis-angle to rotation matrix.
template <typename Scalar>
Mat3<Scalar> rodrigues(const Vec3<Scalar>& aa) {
  Scalar a, b;
  detail::rodrigues_coeffs(aa.norm(), a, b);
  const Mat3<Scalar> k = skew(aa);
  return Mat3<Scalar>::Identity() + a * k + b * (k * k);
}

/// Partial derivatives dR/d(aa_i), i = 0..2. Smooth through aa = 0.
template <typename Scalar>
std::array<Mat3<Scalar>, 3> rodrigues_jacobian(const Vec3<Scalar>& aa) {
  const Scalar t = aa.norm();
  Scalar a, b, da, db;
  detail::rodrigues_coeffs(t, a, b);
  detail::rodrigues_coeff_derivs(t, da, db);
  const Mat3<Scalar> k = skew(aa);
  const Mat3<Scalar> k2 = k * k;
  std::array<Mat3<Scalar>, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Mat3<Scalar> ei = skew<Scalar>(Vec3<Scalar>::Unit(i));
    out[i] = a * ei + b * (ei * k + k * ei) + (da * aa[i]) * k + (db * aa[i]) * k2;
  }
  return out;
}

/// Rotation matrix to axis-angle with angle in [0, pi].
template <typename Scalar>
Vec3<Scalar> log_rotation(const Mat3<Scalar>& r) {
  const Eigen::AngleAxis<Scalar> aa(r);
  return aa.axis() * aa.angle();
}

}  // namespace pmesh
