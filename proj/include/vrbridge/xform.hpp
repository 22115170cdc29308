#pragma once

// Rigid-transform and 4x4 matrix math behind the HMD pose pipeline.
//
// Conventions shared by every module:
//   - world/tracking units are meters, right-handed, +Y up, -Z forward;
//   - Mat4 is row-major and acts on column vectors (p' = M * p);
//   - quaternions are (x, y, z, w) with w the scalar part.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "vrbridge/error.hpp"

namespace vrbridge::xform {

inline constexpr double kRigidTol = 1e-9;
// Matrices that miss kRigidTol but stay within this bound are re-orthonormalized.
inline constexpr double kRepairTol = 1e-6;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return n > 0.0 ? v / n : Vec3{};
}
inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}
inline Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

/// Unit quaternion. Construction through from_components() normalizes.
struct QuatRotation {
  double x = 0.0, y = 0.0, z = 0.0, w = 1.0;

  static constexpr QuatRotation identity() { return {}; }

  static QuatRotation from_components(double x, double y, double z, double w) {
    const double n = std::sqrt(x * x + y * y + z * z + w * w);
    if (!(n > 0.0) || !std::isfinite(n)) return identity();
    return {x / n, y / n, z / n, w / n};
  }

  constexpr QuatRotation conjugate() const { return {-x, -y, -z, w}; }
  constexpr QuatRotation negated() const { return {-x, -y, -z, -w}; }

  // Hamilton product: (*this) then applied after o, i.e. rotate by o first.
  constexpr QuatRotation operator*(const QuatRotation& o) const {
    return {w * o.x + x * o.w + y * o.z - z * o.y, w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w, w * o.w - x * o.x - y * o.y - z * o.z};
  }

  constexpr Vec3 rotate(const Vec3& v) const {
    const Vec3 q{x, y, z};
    const Vec3 t = cross(q, v) * 2.0;
    return v + t * w + cross(q, t);
  }

  constexpr bool operator==(const QuatRotation&) const = default;
};

constexpr double dot(const QuatRotation& a, const QuatRotation& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z + a.w * b.w;
}

struct AxisAngle {
  Vec3 axis{0.0, 0.0, 1.0};
  double angle = 0.0;  // radians

  constexpr bool operator==(const AxisAngle&) const = default;
};

struct Mat4 {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static constexpr Mat4 identity() { return {}; }
  static constexpr Mat4 zero() {
    Mat4 r;
    r.m.fill(0.0);
    return r;
  }
  static constexpr Mat4 translation(const Vec3& t) {
    Mat4 r;
    r(0, 3) = t.x;
    r(1, 3) = t.y;
    r(2, 3) = t.z;
    return r;
  }
  static constexpr Mat4 scale(double s) {
    Mat4 r;
    r(0, 0) = r(1, 1) = r(2, 2) = s;
    return r;
  }

  constexpr double& operator()(int row, int col) { return m[static_cast<std::size_t>(row * 4 + col)]; }
  constexpr double operator()(int row, int col) const { return m[static_cast<std::size_t>(row * 4 + col)]; }

  constexpr Vec3 transform_point(const Vec3& p) const {
    const Mat4& a = *this;
    return {a(0, 0) * p.x + a(0, 1) * p.y + a(0, 2) * p.z + a(0, 3),
            a(1, 0) * p.x + a(1, 1) * p.y + a(1, 2) * p.z + a(1, 3),
            a(2, 0) * p.x + a(2, 1) * p.y + a(2, 2) * p.z + a(2, 3)};
  }
  constexpr Vec3 transform_dir(const Vec3& d) const {
    const Mat4& a = *this;
    return {a(0, 0) * d.x + a(0, 1) * d.y + a(0, 2) * d.z,
            a(1, 0) * d.x + a(1, 1) * d.y + a(1, 2) * d.z,
            a(2, 0) * d.x + a(2, 1) * d.y + a(2, 2) * d.z};
  }
  constexpr Vec3 translation_part() const { return {(*this)(0, 3), (*this)(1, 3), (*this)(2, 3)}; }

  constexpr bool operator==(const Mat4&) const = default;
};

struct RigidTransform {
  QuatRotation rotation;
  Vec3 translation;

  static constexpr RigidTransform identity() { return {}; }

  constexpr Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  constexpr bool operator==(const RigidTransform&) const = default;
};

constexpr Mat4 mat_mul(const Mat4& a, const Mat4& b) {
  Mat4 r = Mat4::zero();
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const double aik = a(i, k);
      for (int j = 0; j < 4; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}
constexpr Mat4 operator*(const Mat4& a, const Mat4& b) { return mat_mul(a, b); }

inline double max_abs_diff(const Mat4& a, const Mat4& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < 16; ++i) d = std::max(d, std::abs(a.m[i] - b.m[i]));
  return d;
}

inline bool is_finite(const Mat4& a) {
  return std::all_of(a.m.begin(), a.m.end(), [](double v) { return std::isfinite(v); });
}

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 upper_left(const Mat4& a) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = a(i, j);
  return r;
}

inline double det3(const Mat3& r) {
  return r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
         r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
         r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
}

// Largest deviation of the block from orthonormal with det +1, and of the
// last row from (0,0,0,1).
inline double rigidity_error(const Mat4& a) {
  const Mat3 r = upper_left(a);
  double err = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[k][i] * r[k][j];
      err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  err = std::max(err, std::abs(det3(r) - 1.0));
  err = std::max({err, std::abs(a(3, 0)), std::abs(a(3, 1)), std::abs(a(3, 2)), std::abs(a(3, 3) - 1.0)});
  return err;
}

// Orthonormal polar factor by Newton iteration R <- (R + R^-T) / 2.
inline Mat3 polar_rotation(Mat3 r) {
  for (int iter = 0; iter < 20; ++iter) {
    const double d = det3(r);
    Mat3 inv_t{};
    // Cofactor matrix divided by det is the inverse transpose.
    inv_t[0][0] = (r[1][1] * r[2][2] - r[1][2] * r[2][1]) / d;
    inv_t[0][1] = (r[1][2] * r[2][0] - r[1][0] * r[2][2]) / d;
    inv_t[0][2] = (r[1][0] * r[2][1] - r[1][1] * r[2][0]) / d;
    inv_t[1][0] = (r[0][2] * r[2][1] - r[0][1] * r[2][2]) / d;
    inv_t[1][1] = (r[0][0] * r[2][2] - r[0][2] * r[2][0]) / d;
    inv_t[1][2] = (r[0][1] * r[2][0] - r[0][0] * r[2][1]) / d;
    inv_t[2][0] = (r[0][1] * r[1][2] - r[0][2] * r[1][1]) / d;
    inv_t[2][1] = (r[0][2] * r[1][0] - r[0][0] * r[1][2]) / d;
    inv_t[2][2] = (r[0][0] * r[1][1] - r[0][1] * r[1][0]) / d;
    double change = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double next = 0.5 * (r[i][j] + inv_t[i][j]);
        change = std::max(change, std::abs(next - r[i][j]));
        r[i][j] = next;
      }
    if (change < 1e-16) break;
  }
  return r;
}

// Shepperd's method; picks the numerically largest pivot.
inline QuatRotation quat_from_mat3(const Mat3& r) {
  const double tr = r[0][0] + r[1][1] + r[2][2];
  double x, y, z, w;
  if (tr >= r[0][0] && tr >= r[1][1] && tr >= r[2][2]) {
    const double s = std::sqrt(1.0 + tr) * 2.0;
    w = 0.25 * s;
    x = (r[2][1] - r[1][2]) / s;
    y = (r[0][2] - r[2][0]) / s;
    z = (r[1][0] - r[0][1]) / s;
  } else if (r[0][0] >= r[1][1] && r[0][0] >= r[2][2]) {
    const double s = std::sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]) * 2.0;
    w = (r[2][1] - r[1][2]) / s;
    x = 0.25 * s;
    y = (r[0][1] + r[1][0]) / s;
    z = (r[0][2] + r[2][0]) / s;
  } else if (r[1][1] >= r[2][2]) {
    const double s = std::sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]) * 2.0;
    w = (r[0][2] - r[2][0]) / s;
    x = (r[0][1] + r[1][0]) / s;
    y = 0.25 * s;
    z = (r[1][2] + r[2][1]) / s;
  } else {
    const double s = std::sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]) * 2.0;
    w = (r[1][0] - r[0][1]) / s;
    x = (r[0][2] + r[2][0]) / s;
    y = (r[1][2] + r[2][1]) / s;
    z = 0.25 * s;
  }
  if (w < 0.0) {
    x = -x;
    y = -y;
    z = -z;
    w = -w;
  }
  return QuatRotation::from_components(x, y, z, w);
}

}  // namespace detail

inline bool is_rigid(const Mat4& a, double tol = kRigidTol) {
  return is_finite(a) && detail::rigidity_error(a) <= tol;
}

inline Mat4 rotation_matrix(const QuatRotation& q) {
  const double xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  const double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
  const double wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
  Mat4 r;
  r(0, 0) = 1.0 - 2.0 * (yy + zz);
  r(0, 1) = 2.0 * (xy - wz);
  r(0, 2) = 2.0 * (xz + wy);
  r(1, 0) = 2.0 * (xy + wz);
  r(1, 1) = 1.0 - 2.0 * (xx + zz);
  r(1, 2) = 2.0 * (yz - wx);
  r(2, 0) = 2.0 * (xz - wy);
  r(2, 1) = 2.0 * (yz + wx);
  r(2, 2) = 1.0 - 2.0 * (xx + yy);
  return r;
}

/// T * R: rotate, then translate.
inline Mat4 compose(const RigidTransform& t) {
  Mat4 r = rotation_matrix(t.rotation);
  r(0, 3) = t.translation.x;
  r(1, 3) = t.translation.y;
  r(2, 3) = t.translation.z;
  return r;
}

/// Splits a rigid matrix into rotation and translation. The returned
/// quaternion has w >= 0. Slightly drifted inputs (within kRepairTol) are
/// projected back onto SO(3) first.
inline RigidTransform decompose(const Mat4& a) {
  if (!is_finite(a)) fail(ErrorCode::NotRigid, "matrix has non-finite entries");
  const double err = detail::rigidity_error(a);
  if (err > kRepairTol) fail(ErrorCode::NotRigid, "upper-left block is not a rotation (error " + std::to_string(err) + ")");
  detail::Mat3 r = detail::upper_left(a);
  if (err > kRigidTol) r = detail::polar_rotation(r);
  return {detail::quat_from_mat3(r), a.translation_part()};
}

inline Mat4 inverse_rigid(const Mat4& a) {
  if (!is_rigid(a, kRepairTol)) fail(ErrorCode::NotRigid, "inverse_rigid requires a rigid matrix");
  Mat4 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = a(j, i);
  const Vec3 t = a.translation_part();
  for (int i = 0; i < 3; ++i) r(i, 3) = -(r(i, 0) * t.x + r(i, 1) * t.y + r(i, 2) * t.z);
  return r;
}

inline RigidTransform inverse(const RigidTransform& t) {
  const QuatRotation inv = t.rotation.conjugate();
  return {inv, -inv.rotate(t.translation)};
}

/// a * b as transforms: apply b first, then a.
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  const QuatRotation q = a.rotation * b.rotation;
  return {QuatRotation::from_components(q.x, q.y, q.z, q.w), a.rotation.rotate(b.translation) + a.translation};
}

inline QuatRotation quat_from_axis_angle(const AxisAngle& a) {
  if (a.angle == 0.0) return QuatRotation::identity();
  const Vec3 axis = normalized(a.axis);
  const double s = std::sin(0.5 * a.angle);
  return QuatRotation::from_components(axis.x * s, axis.y * s, axis.z * s, std::cos(0.5 * a.angle));
}

/// Angle in [0, pi]; a zero rotation yields the canonical axis (0,0,1).
inline AxisAngle axis_angle_from_quat(const QuatRotation& q) {
  QuatRotation c = q.w < 0.0 ? q.negated() : q;
  const double s = std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
  if (s < 1e-15) return {};
  return {{c.x / s, c.y / s, c.z / s}, 2.0 * std::atan2(s, c.w)};
}

inline QuatRotation quat_from_axis_angle(const Vec3& axis, double angle) {
  return quat_from_axis_angle(AxisAngle{axis, angle});
}

/// Normalized linear interpolation along the shortest arc.
inline QuatRotation nlerp(const QuatRotation& a, const QuatRotation& b, double t) {
  const QuatRotation bb = dot(a, b) < 0.0 ? b.negated() : b;
  return QuatRotation::from_components(a.x + (bb.x - a.x) * t, a.y + (bb.y - a.y) * t,
                                       a.z + (bb.z - a.z) * t, a.w + (bb.w - a.w) * t);
}

inline RigidTransform lerp_pose(const RigidTransform& a, const RigidTransform& b, double t) {
  if (t <= 0.0) return a;
  if (t >= 1.0) return b;
  return {nlerp(a.rotation, b.rotation, t), lerp(a.translation, b.translation, t)};
}

/// Rotation about +X by the given angle in degrees.
inline QuatRotation rotation_x_deg(double deg) {
  return quat_from_axis_angle(Vec3{1.0, 0.0, 0.0}, deg * std::numbers::pi / 180.0);
}

}  // namespace vrbridge::xform
