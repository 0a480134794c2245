#pragma once

// Reference implementations written independently of the library, used to
// derive expected values in unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "inbed/body_model.hpp"
#include "inbed/data.hpp"

namespace oracle {

using inbed::Mat3;
using inbed::Vec3;

inline Mat3 rodrigues(const Vec3& aa) {
  const double a = aa.norm();
  if (a == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(a, aa / a).toRotationMatrix();
}

// Intrinsic X, then Y, then Z.
inline Mat3 euler(const Vec3& phi) {
  return (Eigen::AngleAxisd(phi.x(), Vec3::UnitX()) * Eigen::AngleAxisd(phi.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(phi.z(), Vec3::UnitZ()))
      .toRotationMatrix();
}

struct Kinematics {
  std::array<Mat3, inbed::kNumJoints> rot;
  std::array<Vec3, inbed::kNumJoints> pos;  // posed joint location including translation
  std::array<Vec3, inbed::kNumJoints> rest;
};

// Plain forward kinematics over the template's parent tree.
inline Kinematics kinematics(const inbed::SmplParams& p, const inbed::BodyTemplate& t) {
  inbed::Vertices shaped = t.rest_vertices;
  for (int i = 0; i < t.n_vertices(); ++i)
    for (int d = 0; d < 3; ++d) shaped(i, d) += t.shape_dirs.row(3 * i + d).dot(p.beta);
  Kinematics k;
  for (int j = 0; j < inbed::kNumJoints; ++j) {
    Vec3 acc = Vec3::Zero();
    for (int i = 0; i < t.n_vertices(); ++i) acc += t.joint_regressor(j, i) * shaped.row(i).transpose();
    k.rest[j] = acc;
  }
  Vec3 phi;
  for (int d = 0; d < 3; ++d) phi(d) = std::atan2(p.rot_sin(d), p.rot_cos(d));
  for (int j = 0; j < inbed::kNumJoints; ++j) {
    const int par = t.parents[j];
    const Mat3 local = j == 0 ? euler(phi) : rodrigues(p.theta.row(j - 1).transpose());
    if (par < 0) {
      k.rot[j] = local;
      k.pos[j] = k.rest[j] + p.translation;
    } else {
      k.rot[j] = k.rot[par] * local;
      k.pos[j] = k.pos[par] + k.rot[par] * (k.rest[j] - k.rest[par]);
    }
  }
  return k;
}

// Highest hit of a downward ray through (x, y) against every triangle
// (Moller-Trumbore), or nothing.
inline std::optional<double> ray_top(const inbed::Vertices& V,
                                     const Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>& F, double x,
                                     double y, double z_start) {
  const Vec3 o(x, y, z_start), dir(0, 0, -1);
  std::optional<double> best;
  for (Eigen::Index f = 0; f < F.rows(); ++f) {
    const Vec3 a = V.row(F(f, 0)).transpose(), b = V.row(F(f, 1)).transpose(), c = V.row(F(f, 2)).transpose();
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Vec3 tv = o - a;
    const double u = tv.dot(pv) * inv;
    if (u < -1e-12 || u > 1 + 1e-12) continue;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < -1e-12 || u + v > 1 + 1e-12) continue;
    const double t = e2.dot(qv) * inv;
    const double z = z_start - t;
    if (!best || z > *best) best = z;
  }
  return best;
}

inline inbed::DepthImage ray_cast(const inbed::Vertices& V,
                                  const Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>& F,
                                  const inbed::SceneConfig& s) {
  inbed::DepthImage d(s.image_height, s.image_width, 0.0f);
  for (int r = 0; r < s.image_height; ++r)
    for (int c = 0; c < s.image_width; ++c) {
      const auto top = ray_top(V, F, s.row_x(r), s.col_y(c), s.camera_height + 10.0);
      const double surf = top ? std::max(*top, s.bed_surface_height) : s.bed_surface_height;
      d.at(r, c) = static_cast<float>(s.camera_height - surf);
    }
  return d;
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracle
