#include "inbed/body_model.hpp"

#include <cmath>

#include "inbed/archive.hpp"

namespace inbed {

const std::array<const char*, kNumJoints> kJointNames = {
    "pelvis",     "left_hip",       "right_hip",      "spine1",      "left_knee",   "right_knee",
    "spine2",     "left_ankle",     "right_ankle",    "spine3",      "left_foot",   "right_foot",
    "neck",       "left_collar",    "right_collar",   "head",        "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",    "left_wrist",     "right_wrist", "left_hand",   "right_hand"};

SmplParams SmplParams::rest() {
  SmplParams p;
  p.rot_cos = Vec3::Ones();
  return p;
}

ParamVector pack(const SmplParams& p) {
  ParamVector x;
  x.segment<kNumBetas>(param_offset::beta) = p.beta;
  for (int j = 0; j < kNumJoints - 1; ++j)
    for (int d = 0; d < 3; ++d) x(param_offset::theta + 3 * j + d) = p.theta(j, d);
  x.segment<3>(param_offset::translation) = p.translation;
  x.segment<3>(param_offset::rot_sin) = p.rot_sin;
  x.segment<3>(param_offset::rot_cos) = p.rot_cos;
  return x;
}

SmplParams unpack(const ParamVector& x) {
  SmplParams p;
  p.beta = x.segment<kNumBetas>(param_offset::beta);
  for (int j = 0; j < kNumJoints - 1; ++j)
    for (int d = 0; d < 3; ++d) p.theta(j, d) = x(param_offset::theta + 3 * j + d);
  p.translation = x.segment<3>(param_offset::translation);
  p.rot_sin = x.segment<3>(param_offset::rot_sin);
  p.rot_cos = x.segment<3>(param_offset::rot_cos);
  return p;
}

std::array<double, 2> gender_flag(Gender g) {
  return g == Gender::male ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
}

Gender gender_from_flag(std::span<const double, 2> flag) {
  if (flag[0] == 1.0 && flag[1] == 0.0) return Gender::male;
  if (flag[0] == 0.0 && flag[1] == 1.0) return Gender::female;
  throw std::invalid_argument("gender flag must be one-hot");
}

const char* gender_name(Gender g) { return g == Gender::female ? "female" : "male"; }

namespace {

Mat3 rot_x(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}
Mat3 rot_y(double a) {
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}
Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}
Mat3 drot_x(double a) {
  Mat3 r;
  r << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return r;
}
Mat3 drot_y(double a) {
  Mat3 r;
  r << -std::sin(a), 0, std::cos(a), 0, 0, 0, -std::cos(a), 0, -std::sin(a);
  return r;
}
Mat3 drot_z(double a) {
  Mat3 r;
  r << -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a), 0, 0, 0, 0;
  return r;
}

Mat3 skew(const Vec3& w) {
  Mat3 k;
  k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return k;
}

// dR/dw_i for the Rodrigues map, i = 0..2.
std::array<Mat3, 3> axis_angle_jacobian(const Vec3& w, const Mat3& R) {
  std::array<Mat3, 3> out;
  const double sq = w.squaredNorm();
  if (sq < 1e-12) {
    const Mat3 K = skew(w);
    for (int i = 0; i < 3; ++i) {
      const Mat3 E = skew(Vec3::Unit(i));
      out[i] = E + 0.5 * (E * K + K * E);
    }
    return out;
  }
  const Mat3 K = skew(w);
  const Mat3 IminusR = Mat3::Identity() - R;
  for (int i = 0; i < 3; ++i) {
    const Vec3 c = w.cross(IminusR.col(i));
    out[i] = (w(i) * K + skew(c)) / sq * R;
  }
  return out;
}

}  // namespace

Mat3 euler_xyz(const Vec3& a) { return rot_x(a.x()) * rot_y(a.y()) * rot_z(a.z()); }

Vec3 decode_global_rotation(const Vec3& u, const Vec3& v) {
  Vec3 phi;
  for (int i = 0; i < 3; ++i) {
    const double n = std::hypot(u(i), v(i));
    if (!(n >= 1e-8)) throw InvalidRotation("degenerate global-rotation pair on axis " + std::to_string(i));
    phi(i) = std::atan2(u(i) / n, v(i) / n);
  }
  return phi;
}

Mat3 axis_angle_to_matrix(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) return Mat3::Identity() + skew(w);
  const Mat3 K = skew(w / angle);
  return Mat3::Identity() + std::sin(angle) * K + (1.0 - std::cos(angle)) * K * K;
}

void BodyTemplate::validate() const {
  const auto n = rest_vertices.rows();
  if (n < 1) throw TemplateError("template has no vertices");
  if (shape_dirs.rows() != 3 * n || shape_dirs.cols() != kNumBetas)
    throw TemplateError("shape_dirs must be (3N x 10)");
  if (joint_regressor.cols() != n) throw TemplateError("joint_regressor must be (24 x N)");
  if (skin_weights.rows() != n) throw TemplateError("skin_weights must be (N x 24)");
  if (!rest_vertices.allFinite() || !shape_dirs.allFinite() || !joint_regressor.allFinite() ||
      !skin_weights.allFinite())
    throw TemplateError("template contains non-finite values");
  if (parents[0] != -1) throw TemplateError("joint 0 must be the root");
  for (int k = 1; k < kNumJoints; ++k)
    if (parents[k] < 0 || parents[k] >= k) throw TemplateError("kinematic parents must precede their children");
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((skin_weights.row(i).array() < 0.0).any()) throw TemplateError("negative skin weight");
    if (std::abs(skin_weights.row(i).sum() - 1.0) > 1e-6) throw TemplateError("skin weights must sum to 1");
  }
  for (int k = 0; k < kNumJoints; ++k)
    if (std::abs(joint_regressor.row(k).sum() - 1.0) > 1e-6) throw TemplateError("regressor rows must sum to 1");
  for (Eigen::Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c)
      if (faces(f, c) < 0 || faces(f, c) >= n) throw TemplateError("face index out of range");
}

BodyMesh forward(const SmplParams& params, Gender gender, const TemplateSet& templates, PoseTrace* trace) {
  const BodyTemplate& t = templates.get(gender);
  const auto n = t.rest_vertices.rows();

  PoseTrace local;
  PoseTrace& tr = trace ? *trace : local;
  tr.tmpl = &t;

  const Eigen::VectorXd offsets = t.shape_dirs * params.beta;
  tr.shaped = t.rest_vertices + Eigen::Map<const Vertices>(offsets.data(), n, 3);
  const Joints rest_joints = t.joint_regressor * tr.shaped;

  tr.euler = decode_global_rotation(params.rot_sin, params.rot_cos);
  tr.local_rot[0] = euler_xyz(tr.euler);
  for (int k = 1; k < kNumJoints; ++k) tr.local_rot[k] = axis_angle_to_matrix(params.theta.row(k - 1).transpose());

  for (int k = 0; k < kNumJoints; ++k) tr.rest_joints[k] = rest_joints.row(k).transpose();
  tr.world_rot[0] = tr.local_rot[0];
  tr.world_trans[0] = tr.rest_joints[0];
  for (int k = 1; k < kNumJoints; ++k) {
    const int p = t.parents[k];
    tr.world_rot[k] = tr.world_rot[p] * tr.local_rot[k];
    tr.world_trans[k] = tr.world_rot[p] * (tr.rest_joints[k] - tr.rest_joints[p]) + tr.world_trans[p];
  }

  BodyMesh mesh;
  for (int k = 0; k < kNumJoints; ++k) mesh.joints.row(k) = (tr.world_trans[k] + params.translation).transpose();

  std::array<Vec3, kNumJoints> bone_offset;
  for (int k = 0; k < kNumJoints; ++k) bone_offset[k] = tr.world_trans[k] - tr.world_rot[k] * tr.rest_joints[k];

  mesh.vertices.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    Mat3 m = Mat3::Zero();
    Vec3 o = params.translation;
    for (int k = 0; k < kNumJoints; ++k) {
      const double w = t.skin_weights(i, k);
      if (w == 0.0) continue;
      m += w * tr.world_rot[k];
      o += w * bone_offset[k];
    }
    mesh.vertices.row(i) = (m * tr.shaped.row(i).transpose() + o).transpose();
  }
  return mesh;
}

ParamVector backward(const PoseTrace& tr, const SmplParams& params, const Vertices& grad_vertices,
                     const Joints& grad_joints) {
  const BodyTemplate& t = *tr.tmpl;
  const auto n = t.rest_vertices.rows();

  std::array<Mat3, kNumJoints> g_rot;
  std::array<Vec3, kNumJoints> g_trans;
  std::array<Vec3, kNumJoints> g_rest_joint;
  for (int k = 0; k < kNumJoints; ++k) {
    g_rot[k].setZero();
    g_trans[k] = grad_joints.row(k).transpose();
    g_rest_joint[k].setZero();
  }
  Vertices g_shaped = Vertices::Zero(n, 3);
  Vec3 g_translation = grad_joints.colwise().sum().transpose();

  // Skinning: v_i = sum_k w_ik (A_k x_i + B_k) + s, with B_k = t_k - A_k J_k.
  std::array<Vec3, kNumJoints> g_offset;
  for (auto& g : g_offset) g.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 gv = grad_vertices.row(i).transpose();
    const Vec3 x = tr.shaped.row(i).transpose();
    g_translation += gv;
    Mat3 m = Mat3::Zero();
    for (int k = 0; k < kNumJoints; ++k) {
      const double w = t.skin_weights(i, k);
      if (w == 0.0) continue;
      m += w * tr.world_rot[k];
      g_rot[k] += w * gv * x.transpose();
      g_offset[k] += w * gv;
    }
    g_shaped.row(i) += (m.transpose() * gv).transpose();
  }
  for (int k = 0; k < kNumJoints; ++k) {
    g_trans[k] += g_offset[k];
    g_rot[k] -= g_offset[k] * tr.rest_joints[k].transpose();
    g_rest_joint[k] -= tr.world_rot[k].transpose() * g_offset[k];
  }

  // Forward kinematics, children before parents.
  std::array<Mat3, kNumJoints> g_local;
  for (int k = kNumJoints - 1; k >= 1; --k) {
    const int p = t.parents[k];
    const Vec3 bone = tr.rest_joints[k] - tr.rest_joints[p];
    g_rot[p] += g_trans[k] * bone.transpose();
    const Vec3 back = tr.world_rot[p].transpose() * g_trans[k];
    g_rest_joint[k] += back;
    g_rest_joint[p] -= back;
    g_trans[p] += g_trans[k];
    g_rot[p] += g_rot[k] * tr.local_rot[k].transpose();
    g_local[k] = tr.world_rot[p].transpose() * g_rot[k];
  }
  g_local[0] = g_rot[0];
  g_rest_joint[0] += g_trans[0];

  Joints g_rest_joints;
  for (int k = 0; k < kNumJoints; ++k) g_rest_joints.row(k) = g_rest_joint[k].transpose();
  g_shaped += t.joint_regressor.transpose() * g_rest_joints;

  ParamVector grad = ParamVector::Zero();
  grad.segment<kNumBetas>(param_offset::beta) =
      t.shape_dirs.transpose() * Eigen::Map<const Eigen::VectorXd>(g_shaped.data(), 3 * n);

  for (int k = 1; k < kNumJoints; ++k) {
    const Vec3 w = params.theta.row(k - 1).transpose();
    const auto jac = axis_angle_jacobian(w, tr.local_rot[k]);
    for (int i = 0; i < 3; ++i) grad(param_offset::theta + 3 * (k - 1) + i) = (g_local[k].array() * jac[i].array()).sum();
  }

  const Vec3& e = tr.euler;
  const Mat3 rx = rot_x(e.x()), ry = rot_y(e.y()), rz = rot_z(e.z());
  const Vec3 g_euler((g_local[0].array() * (drot_x(e.x()) * ry * rz).array()).sum(),
                     (g_local[0].array() * (rx * drot_y(e.y()) * rz).array()).sum(),
                     (g_local[0].array() * (rx * ry * drot_z(e.z())).array()).sum());
  for (int i = 0; i < 3; ++i) {
    const double u = params.rot_sin(i), v = params.rot_cos(i);
    const double r2 = u * u + v * v;
    grad(param_offset::rot_sin + i) = g_euler(i) * v / r2;
    grad(param_offset::rot_cos + i) = -g_euler(i) * u / r2;
  }
  grad.segment<3>(param_offset::translation) = g_translation;
  return grad;
}

namespace {

void write_one(io::Archive& ar, const std::string& prefix, const BodyTemplate& t) {
  const auto n = t.rest_vertices.rows();
  auto to_f32 = [](auto&& range) {
    std::vector<float> out;
    out.reserve(range.size());
    for (double v : range) out.push_back(static_cast<float>(v));
    return out;
  };
  {
    std::vector<double> rv(t.rest_vertices.data(), t.rest_vertices.data() + t.rest_vertices.size());
    ar.put_f32(prefix + "rest_vertices", {n, 3}, to_f32(rv));
  }
  {
    // (N,3,10) row-major: element [i][d][k] = shape_dirs(3i+d, k)
    std::vector<double> sd(static_cast<std::size_t>(3 * n * kNumBetas));
    for (Eigen::Index r = 0; r < 3 * n; ++r)
      for (int k = 0; k < kNumBetas; ++k) sd[static_cast<std::size_t>(r * kNumBetas + k)] = t.shape_dirs(r, k);
    ar.put_f32(prefix + "shape_dirs", {n, 3, kNumBetas}, to_f32(sd));
  }
  {
    std::vector<double> jr(static_cast<std::size_t>(kNumJoints * n));
    for (int k = 0; k < kNumJoints; ++k)
      for (Eigen::Index i = 0; i < n; ++i) jr[static_cast<std::size_t>(k * n + i)] = t.joint_regressor(k, i);
    ar.put_f32(prefix + "joint_regressor", {kNumJoints, n}, to_f32(jr));
  }
  ar.put_i32(prefix + "kinematic_parents", {kNumJoints}, std::span<const std::int32_t>(t.parents.data(), kNumJoints));
  {
    std::vector<double> sw(t.skin_weights.data(), t.skin_weights.data() + t.skin_weights.size());
    ar.put_f32(prefix + "skin_weights", {n, kNumJoints}, to_f32(sw));
  }
  ar.put_i32(prefix + "faces", {t.faces.rows(), 3},
             std::span<const std::int32_t>(t.faces.data(), static_cast<std::size_t>(t.faces.size())));
}

BodyTemplate read_one(const io::Archive& ar, const std::string& prefix) {
  BodyTemplate t;
  const auto rv = ar.get_f32(prefix + "rest_vertices", {-1, 3});
  const auto n = static_cast<Eigen::Index>(rv.size() / 3);
  t.rest_vertices.resize(n, 3);
  for (Eigen::Index i = 0; i < 3 * n; ++i) t.rest_vertices.data()[i] = rv[static_cast<std::size_t>(i)];

  const auto sd = ar.get_f32(prefix + "shape_dirs", {n, 3, kNumBetas});
  t.shape_dirs.resize(3 * n, kNumBetas);
  for (Eigen::Index r = 0; r < 3 * n; ++r)
    for (int k = 0; k < kNumBetas; ++k) t.shape_dirs(r, k) = sd[static_cast<std::size_t>(r * kNumBetas + k)];

  const auto jr = ar.get_f32(prefix + "joint_regressor", {kNumJoints, n});
  t.joint_regressor.resize(kNumJoints, n);
  for (int k = 0; k < kNumJoints; ++k)
    for (Eigen::Index i = 0; i < n; ++i) t.joint_regressor(k, i) = jr[static_cast<std::size_t>(k * n + i)];

  const auto par = ar.get_i32(prefix + "kinematic_parents", {kNumJoints});
  std::copy(par.begin(), par.end(), t.parents.begin());

  const auto sw = ar.get_f32(prefix + "skin_weights", {n, kNumJoints});
  t.skin_weights.resize(n, kNumJoints);
  for (Eigen::Index i = 0; i < n * kNumJoints; ++i) t.skin_weights.data()[i] = sw[static_cast<std::size_t>(i)];

  const auto fc = ar.get_i32(prefix + "faces", {-1, 3});
  t.faces.resize(static_cast<Eigen::Index>(fc.size() / 3), 3);
  std::copy(fc.begin(), fc.end(), t.faces.data());

  // f32 storage loses the exact partition of unity; restore it before validating.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = t.skin_weights.row(i).sum();
    if (std::abs(s - 1.0) < 1e-5) t.skin_weights.row(i) /= s;
  }
  for (int k = 0; k < kNumJoints; ++k) {
    const double s = t.joint_regressor.row(k).sum();
    if (std::abs(s - 1.0) < 1e-5) t.joint_regressor.row(k) /= s;
  }
  try {
    t.validate();
  } catch (const TemplateError& e) {
    throw TemplateError(prefix + " template: " + e.what());
  }
  return t;
}

}  // namespace

void write_templates(io::Archive& ar, const TemplateSet& set) {
  write_one(ar, "male.", set.male);
  write_one(ar, "female.", set.female);
}

TemplateSet read_templates(const io::Archive& ar) {
  TemplateSet set{read_one(ar, "male."), read_one(ar, "female.")};
  if (set.male.n_vertices() != set.female.n_vertices())
    throw TemplateError("male and female templates must share a vertex count");
  return set;
}

}  // namespace inbed
