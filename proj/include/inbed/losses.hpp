#pragma once

// Parameter, joint and vertex losses with their gradients.
//
//   L_smpl = lb |b - b^|_1 + lt |t - t^|_1 + lp (|u - u^|_1 + |v - v^|_1) + lj sum_i |j_i - j^_i|_2
//   L_v2v  = vertex_norm * sum_i |v_i - v^_i|_2
//   L      = L_smpl + lambda_v2v * L_v2v

#include "inbed/body_model.hpp"
#include "inbed/data.hpp"
#include "json.hpp"

namespace inbed {

struct LossWeights {
  double lambda_beta = 1.0;
  double lambda_theta = 1.0;
  double lambda_psi = 1.0;
  double lambda_joints = 1.0;
  double vertex_norm = 1.0;
  double lambda_v2v = 1.0;

  // lambda_beta = 1/(10 s_beta), lambda_theta = 1/(69 s_theta), lambda_psi = 1/(6 s_psi),
  // lambda_joints = 1/(24 s_J), vertex_norm = 1/(N_V s_V).
  static LossWeights from_stats(const NormStats& stats, int n_vertices, double lambda_v2v = 1.0);
  void validate() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

// A parameter vector together with the mesh it decodes to.
struct Decoded {
  ParamVector params = ParamVector::Zero();
  BodyMesh mesh;
};

double smpl_loss(const ParamVector& pred, const Joints& pred_joints, const ParamVector& gt, const Joints& gt_joints,
                 const LossWeights& w);
// Throws std::invalid_argument on vertex-count mismatch.
double v2v_loss(const Vertices& pred, const Vertices& gt, double vertex_norm);

struct LossParts {
  double smpl = 0.0;
  double v2v = 0.0;
  double total = 0.0;
};

LossParts total_loss(const Decoded& pred, const Decoded& gt, const LossWeights& w);

// Gradient of the total loss w.r.t. the prediction's parameters (direct
// terms only), vertices and joints. L1 and L2 use the zero subgradient at 0.
struct LossGrad {
  ParamVector params = ParamVector::Zero();
  Vertices vertices;
  Joints joints = Joints::Zero();
};
LossParts total_loss_grad(const Decoded& pred, const Decoded& gt, const LossWeights& w, LossGrad& grad);

}  // namespace inbed
