#include "inbed/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace inbed {

const char* cover_name(Cover c) {
  switch (c) {
    case Cover::uncover: return "uncover";
    case Cover::cover1: return "cover1";
    case Cover::cover2: return "cover2";
  }
  return "?";
}

Cover cover_from_name(const std::string& name) {
  for (Cover c : kAllCovers)
    if (name == cover_name(c)) return c;
  throw std::invalid_argument("unknown cover condition '" + name + "'");
}

const char* domain_name(Domain d) { return d == Domain::synthetic ? "synthetic" : "pseudo_real"; }

// ---------------------------------------------------------------- scene

void SceneConfig::validate() const {
  if (!(camera_height > 0 && bed_surface_height > 0 && bed_length > 0 && bed_width > 0 && pixel_pitch > 0))
    throw std::invalid_argument("scene dimensions must be positive");
  if (!(bed_surface_height < camera_height)) throw std::invalid_argument("bed surface must lie below the camera");
  if (image_height < 1 || image_width < 1) throw std::invalid_argument("image size must be positive");
  constexpr double tol = 1e-9;
  if (bed_length > image_height * pixel_pitch + tol || bed_width > image_width * pixel_pitch + tol)
    throw std::invalid_argument("bed does not fit in the image footprint");
}

nlohmann::json SceneConfig::to_json() const {
  return {{"camera_height", camera_height}, {"bed_surface_height", bed_surface_height},
          {"bed_length", bed_length},       {"bed_width", bed_width},
          {"pixel_pitch", pixel_pitch},     {"image_height", image_height},
          {"image_width", image_width}};
}

SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
  SceneConfig s;
  s.camera_height = j.at("camera_height").get<double>();
  s.bed_surface_height = j.at("bed_surface_height").get<double>();
  s.bed_length = j.at("bed_length").get<double>();
  s.bed_width = j.at("bed_width").get<double>();
  s.pixel_pitch = j.at("pixel_pitch").get<double>();
  s.image_height = j.at("image_height").get<int>();
  s.image_width = j.at("image_width").get<int>();
  return s;
}

// ---------------------------------------------------------------- sampling

namespace {

struct JointLimit {
  int joint;
  Vec3 lo, hi;
};

// Radians, in the parent frame of the lying body (x along the body toward
// the head, y toward the body's left, z up). Joints not listed are rigid.
const std::vector<JointLimit>& joint_limits() {
  static const std::vector<JointLimit> table = {
      {1, {-0.15, -0.10, -0.45}, {0.15, 0.55, 0.10}},   // left hip: flexion +y, abduction -z
      {2, {-0.15, -0.10, -0.10}, {0.15, 0.55, 0.45}},   // right hip
      {3, {-0.10, -0.10, -0.12}, {0.10, 0.10, 0.12}},   // spine1
      {4, {-0.05, -0.90, -0.05}, {0.05, 0.00, 0.05}},   // left knee
      {5, {-0.05, -0.90, -0.05}, {0.05, 0.00, 0.05}},   // right knee
      {6, {-0.08, -0.08, -0.10}, {0.08, 0.08, 0.10}},   // spine2
      {7, {-0.20, -0.20, -0.20}, {0.20, 0.20, 0.20}},   // ankles
      {8, {-0.20, -0.20, -0.20}, {0.20, 0.20, 0.20}},
      {9, {-0.08, -0.08, -0.10}, {0.08, 0.08, 0.10}},   // spine3
      {10, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10}},  // feet
      {11, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10}},
      {12, {-0.20, -0.20, -0.20}, {0.20, 0.20, 0.20}},  // neck
      {13, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10}},  // collars
      {14, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10}},
      {15, {-0.30, -0.20, -0.30}, {0.30, 0.20, 0.30}},  // head
      {16, {-0.30, -0.10, -0.80}, {0.30, 0.60, 0.15}},  // left shoulder: abduction -z, raise +y
      {17, {-0.30, -0.10, -0.15}, {0.30, 0.60, 0.80}},  // right shoulder
      {18, {-0.20, 0.00, -0.50}, {0.20, 1.20, 0.20}},   // left elbow
      {19, {-0.20, 0.00, -0.20}, {0.20, 1.20, 0.50}},   // right elbow
      {20, {-0.30, -0.30, -0.30}, {0.30, 0.30, 0.30}},  // wrists
      {21, {-0.30, -0.30, -0.30}, {0.30, 0.30, 0.30}},
      {22, {-0.20, -0.20, -0.20}, {0.20, 0.20, 0.20}},  // hands
      {23, {-0.20, -0.20, -0.20}, {0.20, 0.20, 0.20}},
  };
  return table;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

}  // namespace

SampleRanges SampleRanges::defaults() {
  SampleRanges r;
  r.theta_min.fill(0.0);
  r.theta_max.fill(0.0);
  for (const auto& lim : joint_limits()) {
    for (int a = 0; a < 3; ++a) {
      r.theta_min[3 * (lim.joint - 1) + a] = lim.lo(a);
      r.theta_max[3 * (lim.joint - 1) + a] = lim.hi(a);
    }
  }
  return r;
}

SampleRanges SampleRanges::point(const SmplParams& p, Gender g) {
  SampleRanges r;
  r.beta_min = r.beta_max = 0.0;
  for (int k = 0; k < kPoseDim; ++k) r.theta_min[k] = r.theta_max[k] = p.theta(k / 3, k % 3);
  const Vec3 phi = decode_global_rotation(p.rot_sin, p.rot_cos);
  r.rot_min = r.rot_max = phi;
  r.lateral_probability = 0.0;
  r.tx_min = r.tx_max = p.translation.x();
  r.ty_min = r.ty_max = p.translation.y();
  r.female_probability = g == Gender::female ? 1.0 : 0.0;
  r.point_beta = p.beta;
  r.has_point_beta = true;
  return r;
}

bool footprint_inside_bed(const BodyMesh& mesh, const SceneConfig& scene) {
  const double hx = 0.5 * scene.bed_length, hy = 0.5 * scene.bed_width;
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
    if (std::abs(mesh.vertices(i, 0)) > hx || std::abs(mesh.vertices(i, 1)) > hy) return false;
  return true;
}

SampledBody sample_params(std::mt19937_64& rng, const SampleRanges& ranges, const TemplateSet& templates,
                          const SceneConfig& scene) {
  constexpr int kMaxTries = 100;
  // Laterality is fixed before rejection so accepted bodies keep the configured rate.
  const bool lateral = bernoulli(rng, ranges.lateral_probability);
  const double side = bernoulli(rng, 0.5) ? 1.0 : -1.0;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    SampledBody out;
    out.gender = bernoulli(rng, ranges.female_probability) ? Gender::female : Gender::male;
    SmplParams& p = out.params;
    for (int k = 0; k < kNumBetas; ++k)
      p.beta(k) = ranges.has_point_beta ? ranges.point_beta(k) : uniform(rng, ranges.beta_min, ranges.beta_max);
    for (int k = 0; k < kPoseDim; ++k) p.theta(k / 3, k % 3) = uniform(rng, ranges.theta_min[k], ranges.theta_max[k]);

    Vec3 phi;
    for (int a = 0; a < 3; ++a) phi(a) = uniform(rng, ranges.rot_min(a), ranges.rot_max(a));
    if (lateral) phi.x() = side * uniform(rng, ranges.lateral_roll_min, ranges.lateral_roll_max);
    for (int a = 0; a < 3; ++a) {
      p.rot_sin(a) = std::sin(phi(a));
      p.rot_cos(a) = std::cos(phi(a));
    }
    p.translation = Vec3(uniform(rng, ranges.tx_min, ranges.tx_max), uniform(rng, ranges.ty_min, ranges.ty_max), 0.0);

    // Rest the lowest point of the body on the mattress.
    const BodyMesh mesh = forward(p, out.gender, templates);
    const double lowest = mesh.vertices.col(2).minCoeff();
    p.translation.z() = scene.bed_surface_height - ranges.sink - lowest;
    BodyMesh placed = mesh;
    placed.vertices.col(2).array() += p.translation.z();
    if (footprint_inside_bed(placed, scene)) return out;
  }
  throw SamplingError("no body inside the bed after 100 attempts");
}

// ---------------------------------------------------------------- rendering

RenderResult render_depth(const Vertices& V, const Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>& F,
                          const SceneConfig& scene) {
  const int H = scene.image_height, W = scene.image_width;
  const double pitch = scene.pixel_pitch;
  std::vector<double> top(static_cast<std::size_t>(H) * W, scene.bed_surface_height);
  RenderResult res;

  const double half_x = 0.5 * H * pitch, half_y = 0.5 * W * pitch;
  for (Eigen::Index i = 0; i < V.rows(); ++i)
    if (std::abs(V(i, 0)) > half_x || std::abs(V(i, 1)) > half_y) res.clipped = true;

  for (Eigen::Index f = 0; f < F.rows(); ++f) {
    const Vec3 a = V.row(F(f, 0)).transpose(), b = V.row(F(f, 1)).transpose(), c = V.row(F(f, 2)).transpose();
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (std::abs(area) < 1e-18) continue;  // seen edge-on from above
    const double xmin = std::min({a.x(), b.x(), c.x()}), xmax = std::max({a.x(), b.x(), c.x()});
    const double ymin = std::min({a.y(), b.y(), c.y()}), ymax = std::max({a.y(), b.y(), c.y()});
    const int r0 = std::max(0, static_cast<int>(std::ceil(xmin / pitch + 0.5 * H - 0.5)));
    const int r1 = std::min(H - 1, static_cast<int>(std::floor(xmax / pitch + 0.5 * H - 0.5)));
    const int c0 = std::max(0, static_cast<int>(std::ceil(ymin / pitch + 0.5 * W - 0.5)));
    const int c1 = std::min(W - 1, static_cast<int>(std::floor(ymax / pitch + 0.5 * W - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      const double x = scene.row_x(r);
      for (int col = c0; col <= c1; ++col) {
        const double y = scene.col_y(col);
        const double wa = ((b.x() - x) * (c.y() - y) - (b.y() - y) * (c.x() - x)) / area;
        const double wb = ((c.x() - x) * (a.y() - y) - (c.y() - y) * (a.x() - x)) / area;
        const double wc = 1.0 - wa - wb;
        if (wa < 0 || wb < 0 || wc < 0) continue;
        const double z = wa * a.z() + wb * b.z() + wc * c.z();
        double& t = top[static_cast<std::size_t>(r) * W + col];
        t = std::max(t, z);
      }
    }
  }

  res.depth = DepthImage(H, W, 0.0f);
  for (std::size_t i = 0; i < top.size(); ++i) res.depth.pixels[i] = static_cast<float>(scene.camera_height - top[i]);
  return res;
}

// ---------------------------------------------------------------- covers

CoverStyle cover_style(Cover c) {
  switch (c) {
    case Cover::cover1: return {1, 1.0, 0.005};
    case Cover::cover2: return {2, 2.5, 0.015};
    case Cover::uncover: break;
  }
  return {0, 0.0, 0.0};
}

namespace {

using Grid = std::vector<double>;

Grid to_grid(const DepthImage& d) { return Grid(d.pixels.begin(), d.pixels.end()); }

// Minimum depth (highest surface) over a (2r+1)^2 window, clamped at borders.
Grid min_filter(const Grid& g, int H, int W, int r) {
  Grid tmp(g.size()), out(g.size());
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double m = g[i * W + j];
      for (int k = std::max(0, j - r); k <= std::min(W - 1, j + r); ++k) m = std::min(m, g[i * W + k]);
      tmp[i * W + j] = m;
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double m = tmp[i * W + j];
      for (int k = std::max(0, i - r); k <= std::min(H - 1, i + r); ++k) m = std::min(m, tmp[k * W + j]);
      out[i * W + j] = m;
    }
  return out;
}

// Separable convolution with a normalised symmetric kernel, replicate border.
Grid convolve(const Grid& g, int H, int W, const std::vector<double>& kernel) {
  const int rad = static_cast<int>(kernel.size() / 2);
  Grid tmp(g.size()), out(g.size());
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double s = 0;
      for (int k = -rad; k <= rad; ++k) s += kernel[k + rad] * g[i * W + std::clamp(j + k, 0, W - 1)];
      tmp[i * W + j] = s;
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double s = 0;
      for (int k = -rad; k <= rad; ++k) s += kernel[k + rad] * tmp[std::clamp(i + k, 0, H - 1) * W + j];
      out[i * W + j] = s;
    }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * rad + 1);
  double sum = 0;
  for (int i = -rad; i <= rad; ++i) sum += k[i + rad] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

DepthImage apply_cover_at(const DepthImage& depth, Cover cover, int chest_row) {
  if (cover == Cover::uncover) return depth;
  const CoverStyle st = cover_style(cover);
  const int H = depth.height, W = depth.width;
  const Grid env = convolve(min_filter(to_grid(depth), H, W, st.envelope_radius), H, W, gaussian_kernel(st.smooth_sigma));
  DepthImage out = depth;
  const int rows = std::clamp(chest_row, 0, H);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < W; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * W + c;
      out.pixels[i] = std::min(depth.pixels[i], static_cast<float>(env[i] - st.offset));
    }
  return out;
}

DepthImage apply_cover(const DepthImage& depth, Cover cover, std::mt19937_64& rng, int* chest_row) {
  if (cover == Cover::uncover) return depth;
  const int H = depth.height;
  const int lo = static_cast<int>(std::lround(0.58 * H)), hi = static_cast<int>(std::lround(0.72 * H));
  const int row = std::uniform_int_distribution<int>(lo, hi)(rng);
  if (chest_row) *chest_row = row;
  return apply_cover_at(depth, cover, row);
}

// ---------------------------------------------------------------- domain shift

nlohmann::json ShiftProfile::to_json() const {
  return {{"noise_std", noise_std}, {"bias", bias}, {"blur", blur}, {"sag", sag}, {"scale", scale}};
}

ShiftProfile ShiftProfile::from_json(const nlohmann::json& j) {
  ShiftProfile p;
  p.noise_std = j.at("noise_std").get<double>();
  p.bias = j.at("bias").get<double>();
  p.blur = j.at("blur").get<double>();
  p.sag = j.at("sag").get<double>();
  p.scale = j.at("scale").get<double>();
  return p;
}

DepthImage domain_shift(const DepthImage& depth, std::mt19937_64& rng, const ShiftProfile& profile,
                        const SceneConfig& scene) {
  const int H = depth.height, W = depth.width;
  Grid g = to_grid(depth);
  bool changed = false;

  if (profile.sag != 0.0) {
    const double hx = 0.5 * scene.bed_length, hy = 0.5 * scene.bed_width;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const double ex = scene.row_x(r) / hx, ey = scene.col_y(c) / hy;
        g[r * W + c] += profile.sag * std::max(0.0, 1.0 - ex * ex - ey * ey);
      }
    changed = true;
  }
  if (profile.scale != 0.0) {
    const double ref = scene.bed_depth();
    for (double& v : g) v = ref + (v - ref) * (1.0 + profile.scale);
    changed = true;
  }
  if (profile.blur > 0.0) {
    const Grid b = convolve(g, H, W, {0.25, 0.5, 0.25});
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (1.0 - profile.blur) * g[i] + profile.blur * b[i];
    changed = true;
  }
  if (profile.bias != 0.0) {
    for (double& v : g) v += profile.bias;
    changed = true;
  }
  if (profile.noise_std > 0.0) {
    std::normal_distribution<double> n(0.0, profile.noise_std);
    for (double& v : g) v += n(rng);
    changed = true;
  }
  if (!changed) return depth;

  DepthImage out(H, W, 0.0f);
  const double lo = 1e-4, hi = scene.camera_height;
  for (std::size_t i = 0; i < g.size(); ++i) out.pixels[i] = static_cast<float>(std::clamp(g[i], lo, hi));
  return out;
}

// ---------------------------------------------------------------- augmentation

nlohmann::json AugmentPolicy::to_json() const {
  return {{"p_rotate", p_rotate}, {"max_rotate_deg", max_rotate_deg}, {"p_erase", p_erase},
          {"max_erase_fraction", max_erase_fraction}, {"p_noise", p_noise}, {"max_noise_std", max_noise_std},
          {"rotate_labels", rotate_labels}};
}

AugmentPolicy AugmentPolicy::from_json(const nlohmann::json& j) {
  AugmentPolicy p;
  p.p_rotate = j.at("p_rotate").get<double>();
  p.max_rotate_deg = j.at("max_rotate_deg").get<double>();
  p.p_erase = j.at("p_erase").get<double>();
  p.max_erase_fraction = j.at("max_erase_fraction").get<double>();
  p.p_noise = j.at("p_noise").get<double>();
  p.max_noise_std = j.at("max_noise_std").get<double>();
  p.rotate_labels = j.at("rotate_labels").get<bool>();
  return p;
}

DepthImage rotate_image(const DepthImage& depth, double angle, float fill) {
  const int H = depth.height, W = depth.width;
  const double cy = 0.5 * (H - 1), cx = 0.5 * (W - 1);
  const double ca = std::cos(angle), sa = std::sin(angle);
  auto sample = [&](int r, int c) -> double {
    if (r < 0 || r >= H || c < 0 || c >= W) return fill;
    return depth.at(r, c);
  };
  DepthImage out(H, W, fill);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double dr = r - cy, dc = c - cx;
      const double sr = cy + ca * dr + sa * dc, sc = cx - sa * dr + ca * dc;
      const int r0 = static_cast<int>(std::floor(sr)), c0 = static_cast<int>(std::floor(sc));
      const double fr = sr - r0, fc = sc - c0;
      const double v = (1 - fr) * ((1 - fc) * sample(r0, c0) + fc * sample(r0, c0 + 1)) +
                       fr * ((1 - fc) * sample(r0 + 1, c0) + fc * sample(r0 + 1, c0 + 1));
      out.at(r, c) = static_cast<float>(v);
    }
  return out;
}

void erase_rect(DepthImage& depth, int row, int col, int height, int width, float fill) {
  for (int r = std::max(0, row); r < std::min(depth.height, row + height); ++r)
    for (int c = std::max(0, col); c < std::min(depth.width, col + width); ++c) depth.at(r, c) = fill;
}

Augmented augment(const DepthImage& depth, std::mt19937_64& rng, const AugmentPolicy& policy,
                  const SceneConfig& scene) {
  const float fill = static_cast<float>(scene.bed_depth());
  Augmented out{depth, 0.0};
  if (bernoulli(rng, policy.p_rotate)) {
    const double max_rad = policy.max_rotate_deg * std::numbers::pi / 180.0;
    out.rotation = uniform(rng, -max_rad, max_rad);
    out.depth = rotate_image(out.depth, out.rotation, fill);
  }
  if (bernoulli(rng, policy.p_erase)) {
    const int H = depth.height, W = depth.width;
    const double area = uniform(rng, 0.02, std::max(0.02, policy.max_erase_fraction)) * H * W;
    const double aspect = std::exp(uniform(rng, std::log(0.5), std::log(2.0)));
    const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, H);
    const int w = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, W);
    const int r = std::uniform_int_distribution<int>(0, H - h)(rng);
    const int c = std::uniform_int_distribution<int>(0, W - w)(rng);
    erase_rect(out.depth, r, c, h, w, fill);
  }
  if (bernoulli(rng, policy.p_noise)) {
    const double sigma = uniform(rng, 0.0, policy.max_noise_std);
    std::normal_distribution<double> n(0.0, sigma > 0 ? sigma : 1.0);
    if (sigma > 0)
      for (float& v : out.depth.pixels) v = static_cast<float>(v + n(rng));
  }
  return out;
}

SmplParams rotate_params_about_vertical(const SmplParams& params, double angle, Gender gender,
                                        const TemplateSet& templates) {
  const Mat3 Rz = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
  const Mat3 R = Rz * euler_xyz(decode_global_rotation(params.rot_sin, params.rot_cos));
  // R = Rx(a) Ry(b) Rz(c)
  const double b = std::asin(std::clamp(R(0, 2), -1.0, 1.0));
  const double a = std::atan2(-R(1, 2), R(2, 2));
  const double c = std::atan2(-R(0, 1), R(0, 0));
  const Vec3 root = forward(params, gender, templates).joints.row(0).transpose();  // rest root + s

  SmplParams out = params;
  const Vec3 phi(a, b, c);
  for (int i = 0; i < 3; ++i) {
    out.rot_sin(i) = std::sin(phi(i));
    out.rot_cos(i) = std::cos(phi(i));
  }
  out.translation = Rz * root - (root - params.translation);
  return out;
}

// ---------------------------------------------------------------- samples & stats

bool Sample::operator==(const Sample& o) const {
  return depth == o.depth && params == o.params && gender == o.gender && cover == o.cover && domain == o.domain &&
         participant == o.participant;
}

nlohmann::json NormStats::to_json() const {
  auto arr = [](const Latent& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"sigma_beta", sigma_beta},
          {"sigma_theta", sigma_theta},
          {"sigma_psi", sigma_psi},
          {"sigma_joints", sigma_joints},
          {"sigma_vertices", sigma_vertices},
          {"latent_mean", arr(latent.mean)},
          {"latent_std", arr(latent.std)}};
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats s;
  s.sigma_beta = j.at("sigma_beta").get<double>();
  s.sigma_theta = j.at("sigma_theta").get<double>();
  s.sigma_psi = j.at("sigma_psi").get<double>();
  s.sigma_joints = j.at("sigma_joints").get<double>();
  s.sigma_vertices = j.at("sigma_vertices").get<double>();
  const auto m = j.at("latent_mean").get<std::vector<double>>();
  const auto d = j.at("latent_std").get<std::vector<double>>();
  if (m.size() != kParamDim || d.size() != kParamDim) throw std::invalid_argument("latent statistics must have 88 entries");
  for (int i = 0; i < kParamDim; ++i) {
    s.latent.mean(i) = m[i];
    s.latent.std(i) = d[i];
  }
  return s;
}

namespace {

// Pooled spread of a block of components: the square root of the mean
// per-component population variance. Values are sorted per component so the
// result does not depend on sample order.
class PooledSpread {
 public:
  explicit PooledSpread(std::size_t n_components) : values_(n_components) {}

  template <typename It>
  void add(It first) {
    for (auto& v : values_) v.push_back(*first++);
  }

  double value() const {
    double acc = 0.0;
    for (auto v : values_) {
      std::sort(v.begin(), v.end());
      const double n = static_cast<double>(v.size());
      double sum = 0.0;
      for (double x : v) sum += x;
      const double mean = sum / n;
      for (double& x : v) x = (x - mean) * (x - mean);
      std::sort(v.begin(), v.end());
      double ss = 0.0;
      for (double x : v) ss += x;
      acc += ss / n;
    }
    return std::max(NormStats::kFloor, std::sqrt(acc / static_cast<double>(values_.size())));
  }

 private:
  std::vector<std::vector<double>> values_;
};

}  // namespace

NormStats compute_norm_stats(const std::vector<Sample>& samples, const TemplateSet& templates) {
  if (samples.empty()) throw std::invalid_argument("cannot compute statistics of an empty dataset");
  const auto n_coords = static_cast<std::size_t>(3 * templates.n_vertices());
  PooledSpread beta(kNumBetas), theta(kPoseDim), psi(6), joints(3 * kNumJoints), verts(n_coords);
  std::vector<Latent> latents;
  latents.reserve(samples.size());
  for (const Sample& s : samples) {
    const ParamVector& x = s.params;
    beta.add(x.data() + param_offset::beta);
    theta.add(x.data() + param_offset::theta);
    psi.add(x.data() + param_offset::rot_sin);
    const BodyMesh mesh = forward(unpack(x), s.gender, templates);
    joints.add(mesh.joints.data());
    verts.add(mesh.vertices.data());
    latents.push_back(x);
  }
  NormStats st;
  st.sigma_beta = beta.value();
  st.sigma_theta = theta.value();
  st.sigma_psi = psi.value();
  st.sigma_joints = joints.value();
  st.sigma_vertices = verts.value();
  st.latent = LatentStandardizer::fit(latents);
  return st;
}

// ---------------------------------------------------------------- generation

double participant_bias(double bias_max, int participant) {
  std::seed_seq seq{0x6269u, static_cast<unsigned>(participant)};
  std::mt19937_64 rng(seq);
  return uniform(rng, -bias_max, bias_max);
}

Sample generate_sample(const GenerationConfig& cfg, const TemplateSet& templates, int index) {
  std::seed_seq seq{static_cast<unsigned>(cfg.seed & 0xffffffffu), static_cast<unsigned>(cfg.seed >> 32),
                    static_cast<unsigned>(index), 0x73616dU};
  std::mt19937_64 rng(seq);

  const SampledBody body = sample_params(rng, cfg.ranges, templates, cfg.scene);
  Sample s;
  s.params = pack(body.params).cast<float>().cast<double>();
  s.gender = body.gender;
  s.cover = kAllCovers[static_cast<std::size_t>(index % 3)];
  s.domain = cfg.domain;
  s.participant = cfg.first_participant + index % std::max(1, cfg.n_participants);

  const BodyMesh mesh = forward(unpack(s.params), s.gender, templates);
  DepthImage depth = render_depth(mesh.vertices, templates.get(s.gender).faces, cfg.scene).depth;
  depth = apply_cover(depth, s.cover, rng);
  if (cfg.domain == Domain::pseudo_real) {
    ShiftProfile prof = cfg.shift;
    prof.bias = cfg.shift.bias + participant_bias(cfg.bias_max, s.participant);
    depth = domain_shift(depth, rng, prof, cfg.scene);
  }
  s.depth = std::move(depth);
  return s;
}

Dataset generate_dataset(const GenerationConfig& cfg, const TemplateSet& templates) {
  cfg.scene.validate();
  if (cfg.n_samples < 0) throw std::invalid_argument("sample count must be nonnegative");
  Dataset ds;
  ds.scene = cfg.scene;
  ds.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i) ds.samples.push_back(generate_sample(cfg, templates, i));
  ds.meta = {{"seed", cfg.seed},
             {"domain", domain_name(cfg.domain)},
             {"n_samples", cfg.n_samples},
             {"first_participant", cfg.first_participant},
             {"n_participants", cfg.n_participants},
             {"bias_max", cfg.bias_max},
             {"shift", cfg.shift.to_json()}};
  return ds;
}

}  // namespace inbed
