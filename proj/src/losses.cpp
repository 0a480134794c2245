#include "inbed/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace inbed {

LossWeights LossWeights::from_stats(const NormStats& s, int n_vertices, double lambda_v2v) {
  if (n_vertices < 1) throw std::invalid_argument("vertex count must be positive");
  LossWeights w;
  w.lambda_beta = 1.0 / (kNumBetas * s.sigma_beta);
  w.lambda_theta = 1.0 / (kPoseDim * s.sigma_theta);
  w.lambda_psi = 1.0 / (6.0 * s.sigma_psi);
  w.lambda_joints = 1.0 / (kNumJoints * s.sigma_joints);
  w.vertex_norm = 1.0 / (n_vertices * s.sigma_vertices);
  w.lambda_v2v = lambda_v2v;
  w.validate();
  return w;
}

void LossWeights::validate() const {
  for (double v : {lambda_beta, lambda_theta, lambda_psi, lambda_joints, vertex_norm})
    if (!(v > 0 && std::isfinite(v))) throw std::invalid_argument("loss weights must be positive and finite");
  if (!(lambda_v2v >= 0 && std::isfinite(lambda_v2v))) throw std::invalid_argument("lambda_v2v must be nonnegative");
}

nlohmann::json LossWeights::to_json() const {
  return {{"lambda_beta", lambda_beta},     {"lambda_theta", lambda_theta}, {"lambda_psi", lambda_psi},
          {"lambda_joints", lambda_joints}, {"vertex_norm", vertex_norm},   {"lambda_v2v", lambda_v2v}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda_beta = j.at("lambda_beta").get<double>();
  w.lambda_theta = j.at("lambda_theta").get<double>();
  w.lambda_psi = j.at("lambda_psi").get<double>();
  w.lambda_joints = j.at("lambda_joints").get<double>();
  w.vertex_norm = j.at("vertex_norm").get<double>();
  w.lambda_v2v = j.at("lambda_v2v").get<double>();
  return w;
}

namespace {

double l1(const ParamVector& a, const ParamVector& b, int off, int n) {
  return (a.segment(off, n) - b.segment(off, n)).cwiseAbs().sum();
}

double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

double smpl_loss(const ParamVector& pred, const Joints& pj, const ParamVector& gt, const Joints& gj,
                 const LossWeights& w) {
  double joints = 0;
  for (int i = 0; i < kNumJoints; ++i) joints += (pj.row(i) - gj.row(i)).norm();
  return w.lambda_beta * l1(pred, gt, param_offset::beta, kNumBetas) +
         w.lambda_theta * l1(pred, gt, param_offset::theta, kPoseDim) +
         w.lambda_psi * (l1(pred, gt, param_offset::rot_sin, 3) + l1(pred, gt, param_offset::rot_cos, 3)) +
         w.lambda_joints * joints;
}

double v2v_loss(const Vertices& pred, const Vertices& gt, double vertex_norm) {
  if (pred.rows() != gt.rows()) throw std::invalid_argument("vertex count mismatch in v2v loss");
  double s = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) s += (pred.row(i) - gt.row(i)).norm();
  return vertex_norm * s;
}

LossParts total_loss(const Decoded& pred, const Decoded& gt, const LossWeights& w) {
  LossParts p;
  p.smpl = smpl_loss(pred.params, pred.mesh.joints, gt.params, gt.mesh.joints, w);
  p.v2v = v2v_loss(pred.mesh.vertices, gt.mesh.vertices, w.vertex_norm);
  p.total = p.smpl + w.lambda_v2v * p.v2v;
  return p;
}

LossParts total_loss_grad(const Decoded& pred, const Decoded& gt, const LossWeights& w, LossGrad& g) {
  const LossParts parts = total_loss(pred, gt, w);
  g.params.setZero();
  auto l1_grad = [&](int off, int n, double lambda) {
    for (int k = off; k < off + n; ++k) g.params(k) = lambda * sgn(pred.params(k) - gt.params(k));
  };
  l1_grad(param_offset::beta, kNumBetas, w.lambda_beta);
  l1_grad(param_offset::theta, kPoseDim, w.lambda_theta);
  l1_grad(param_offset::rot_sin, 6, w.lambda_psi);

  g.joints.setZero();
  for (int i = 0; i < kNumJoints; ++i) {
    const Eigen::RowVector3d d = pred.mesh.joints.row(i) - gt.mesh.joints.row(i);
    const double n = d.norm();
    if (n > 0) g.joints.row(i) = w.lambda_joints * d / n;
  }
  const Eigen::Index nv = pred.mesh.vertices.rows();
  if (gt.mesh.vertices.rows() != nv) throw std::invalid_argument("vertex count mismatch in v2v loss");
  g.vertices.setZero(nv, 3);
  const double scale = w.lambda_v2v * w.vertex_norm;
  for (Eigen::Index i = 0; i < nv; ++i) {
    const Eigen::RowVector3d d = pred.mesh.vertices.row(i) - gt.mesh.vertices.row(i);
    const double n = d.norm();
    if (n > 0) g.vertices.row(i) = scale * d / n;
  }
  return parts;
}

}  // namespace inbed
