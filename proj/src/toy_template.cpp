// Procedural capsule body used when no SMPL model data is available.
//
// The body is built lying supine in the bed frame: +x toward the head, +y to
// the body's left, +z up toward the camera. Each bone (and a short tip
// segment past every leaf joint) is a tube of elliptical rings; vertex
// positions are affine in beta, so the shape blendshapes are exact.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "inbed/body_model.hpp"

namespace inbed {

namespace {

enum Region { kTorso, kLeg, kArm, kHead };

struct Segment {
  int joint;            // driving joint (start of the segment)
  int end_joint;        // joint at the far end, or -1 for a tip segment
  Vec3 tip_offset;      // far end relative to `joint` for tip segments
  double r_lat, r_vert;
  Region region;
};

struct BodyProportions {
  std::array<Vec3, kNumJoints> joints;
  std::vector<Segment> segments;
};

BodyProportions proportions(Gender g) {
  BodyProportions b;
  auto& J = b.joints;
  J[0] = {0.00, 0.00, 0.00};
  J[1] = {-0.08, 0.09, 0.00};
  J[2] = {-0.08, -0.09, 0.00};
  J[3] = {0.10, 0.00, 0.01};
  J[4] = {-0.48, 0.10, 0.00};
  J[5] = {-0.48, -0.10, 0.00};
  J[6] = {0.23, 0.00, 0.01};
  J[7] = {-0.88, 0.10, -0.01};
  J[8] = {-0.88, -0.10, -0.01};
  J[9] = {0.30, 0.00, 0.01};
  J[10] = {-0.93, 0.11, 0.07};
  J[11] = {-0.93, -0.11, 0.07};
  J[12] = {0.52, 0.00, 0.01};
  J[13] = {0.42, 0.08, 0.01};
  J[14] = {0.42, -0.08, 0.01};
  J[15] = {0.62, 0.00, 0.02};
  J[16] = {0.44, 0.19, 0.00};
  J[17] = {0.44, -0.19, 0.00};
  J[18] = {0.17, 0.25, 0.00};
  J[19] = {0.17, -0.25, 0.00};
  J[20] = {-0.08, 0.28, 0.00};
  J[21] = {-0.08, -0.28, 0.00};
  J[22] = {-0.16, 0.29, 0.00};
  J[23] = {-0.16, -0.29, 0.00};

  double torso_girth = 1.0, hip_girth = 1.0;
  if (g == Gender::female) {
    for (auto& j : J) j *= 0.93;
    for (int k : {13, 14, 16, 17, 18, 19, 20, 21, 22, 23}) J[k].y() *= 0.90;
    for (int k : {1, 2, 4, 5, 7, 8, 10, 11}) J[k].y() *= 1.10;
    torso_girth = 0.95;
    hip_girth = 1.08;
  }

  auto bone = [&](int child, double rl, double rv, Region r) {
    b.segments.push_back({kSmplParents[child], child, Vec3::Zero(), rl, rv, r});
  };
  bone(3, 0.15 * hip_girth, 0.10, kTorso);
  bone(6, 0.14 * torso_girth, 0.10, kTorso);
  bone(9, 0.15 * torso_girth, 0.11, kTorso);
  bone(12, 0.13 * torso_girth, 0.09, kTorso);
  bone(13, 0.06, 0.06, kTorso);
  bone(14, 0.06, 0.06, kTorso);
  bone(1, 0.08 * hip_girth, 0.08, kLeg);
  bone(2, 0.08 * hip_girth, 0.08, kLeg);
  bone(4, 0.075, 0.075, kLeg);
  bone(5, 0.075, 0.075, kLeg);
  bone(7, 0.055, 0.055, kLeg);
  bone(8, 0.055, 0.055, kLeg);
  bone(10, 0.045, 0.04, kLeg);
  bone(11, 0.045, 0.04, kLeg);
  bone(15, 0.055, 0.055, kHead);
  bone(16, 0.06, 0.06, kArm);
  bone(17, 0.06, 0.06, kArm);
  bone(18, 0.045, 0.045, kArm);
  bone(19, 0.045, 0.045, kArm);
  bone(20, 0.038, 0.035, kArm);
  bone(21, 0.038, 0.035, kArm);
  bone(22, 0.035, 0.03, kArm);
  bone(23, 0.035, 0.03, kArm);
  const double s = g == Gender::female ? 0.93 : 1.0;
  b.segments.push_back({15, -1, Vec3(0.17, 0, 0.01) * s, 0.085, 0.09, kHead});
  b.segments.push_back({10, -1, Vec3(-0.03, 0, 0.09) * s, 0.04, 0.035, kLeg});
  b.segments.push_back({11, -1, Vec3(-0.03, 0, 0.09) * s, 0.04, 0.035, kLeg});
  b.segments.push_back({22, -1, Vec3(-0.08, 0.005, 0) * s, 0.03, 0.02, kArm});
  b.segments.push_back({23, -1, Vec3(-0.08, -0.005, 0) * s, 0.03, 0.02, kArm});
  return b;
}

// Linear shape model: each beta direction rescales bone offsets per axis and
// segment radii.
struct ShapeCoefficients {
  std::array<std::array<Vec3, kNumJoints>, kNumBetas> offset;  // per child joint
  std::vector<std::array<double, kNumBetas>> tip;              // per segment (tips only)
  std::vector<std::array<double, kNumBetas>> girth;            // per segment
};

ShapeCoefficients shape_coefficients(const std::vector<Segment>& segs) {
  ShapeCoefficients c;
  for (auto& dir : c.offset)
    for (auto& v : dir) v.setZero();
  c.tip.assign(segs.size(), {});
  c.girth.assign(segs.size(), {});

  auto scale_offset = [&](int k, std::initializer_list<int> joints, const Vec3& amount) {
    for (int j : joints) c.offset[k][j] += amount;
  };
  std::vector<int> all(kNumJoints - 1);
  std::iota(all.begin(), all.end(), 1);
  for (int j : all) c.offset[0][j] += Vec3::Constant(0.04);
  scale_offset(2, {3, 6, 9, 12, 15}, Vec3(0.05, 0, 0.05));
  scale_offset(3, {4, 5, 7, 8}, Vec3(0.05, 0.02, 0.05));
  scale_offset(4, {18, 19, 20, 21}, Vec3(0.05, 0.05, 0.05));
  scale_offset(8, {13, 14, 16, 17}, Vec3(0, 0.08, 0));
  scale_offset(9, {1, 2}, Vec3(0, 0.08, 0));

  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto r = segs[s].region;
    c.tip[s][0] = 0.04;
    c.girth[s][0] = 0.03;
    c.girth[s][1] = 0.06;
    if (r == kTorso) c.girth[s][5] = 0.08;
    if (r == kArm) c.girth[s][6] = 0.08;
    if (r == kLeg) c.girth[s][7] = 0.08;
    if (segs[s].end_joint == 3) c.girth[s][9] = 0.05;
  }
  return c;
}

struct Ring {
  int segment;
  double frac;
  std::vector<int> vertices;
};

// Vertex quota per segment: one guaranteed vertex for the longest segment of
// every joint, the rest by largest remainder over length x girth.
std::vector<int> allocate(const BodyProportions& b, int n_vertices) {
  const auto& segs = b.segments;
  std::vector<double> weight(segs.size());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const Vec3 end = segs[s].end_joint >= 0 ? b.joints[segs[s].end_joint] : b.joints[segs[s].joint] + segs[s].tip_offset;
    weight[s] = (end - b.joints[segs[s].joint]).norm() * (segs[s].r_lat + segs[s].r_vert);
  }
  std::vector<int> quota(segs.size(), 0);
  for (int j = 0; j < kNumJoints; ++j) {
    int best = -1;
    for (std::size_t s = 0; s < segs.size(); ++s)
      if (segs[s].joint == j && (best < 0 || weight[s] > weight[static_cast<std::size_t>(best)])) best = static_cast<int>(s);
    if (best < 0) throw std::logic_error("joint without segment");
    ++quota[static_cast<std::size_t>(best)];
  }
  const int rest = n_vertices - kNumJoints;
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const double exact = rest * weight[s] / total;
    const int whole = static_cast<int>(std::floor(exact));
    quota[s] += whole;
    assigned += whole;
    remainders.push_back({exact - whole, s});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < rest - assigned; ++i) ++quota[remainders[static_cast<std::size_t>(i)].second];
  return quota;
}

void cross_section(const Vec3& dir, Vec3& e1, Vec3& e2) {
  const Vec3 d = dir.normalized();
  Vec3 ref = Vec3::UnitZ();
  if (std::abs(d.dot(ref)) > 0.9) ref = Vec3::UnitX();
  e1 = d.cross(ref).normalized();
  e2 = e1.cross(d).normalized();
  if (e2.z() < 0 || (e2.z() == 0 && e2.x() < 0)) e2 = -e2;
}

// Zip two angle-ordered rings into a band of triangles.
void zip(const std::vector<int>& a, const std::vector<int>& b, std::vector<std::array<int, 3>>& faces) {
  const auto na = a.size(), nb = b.size();
  std::size_t i = 0, j = 0;
  while (i < na || j < nb) {
    const bool advance_a = j >= nb || (i < na && static_cast<double>(i + 1) / na <= static_cast<double>(j + 1) / nb);
    std::array<int, 3> f;
    if (advance_a) {
      f = {a[i % na], a[(i + 1) % na], b[j % nb]};
      ++i;
    } else {
      f = {a[i % na], b[(j + 1) % nb], b[j % nb]};
      ++j;
    }
    if (f[0] != f[1] && f[1] != f[2] && f[0] != f[2]) faces.push_back(f);
  }
}

void cap(const std::vector<int>& ring, std::vector<std::array<int, 3>>& faces) {
  for (std::size_t k = 1; k + 1 < ring.size(); ++k) faces.push_back({ring[0], ring[k], ring[k + 1]});
}

struct Layout {
  struct VertexSpec {
    int segment;
    double frac;
    double cos_a, sin_a;
    double jitter;
  };
  std::vector<VertexSpec> verts;
  std::vector<Ring> rings;
  std::vector<std::array<int, 3>> faces;
};

Layout layout(const std::vector<int>& quota, std::mt19937_64& rng) {
  Layout L;
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  for (std::size_t s = 0; s < quota.size(); ++s) {
    const int q = quota[s];
    if (q == 0) continue;
    const int n_rings = std::max(1, static_cast<int>(std::lround(q / 6.0)));
    std::vector<std::vector<int>> seg_rings;
    for (int r = 0; r < n_rings; ++r) {
      const int m = q / n_rings + (r < q % n_rings ? 1 : 0);
      const double frac = n_rings == 1 ? 0.5 : static_cast<double>(r) / (n_rings - 1);
      Ring ring{static_cast<int>(s), frac, {}};
      for (int k = 0; k < m; ++k) {
        const double ang = 2.0 * M_PI * (k + 0.5 * (r % 2)) / m;
        ring.vertices.push_back(static_cast<int>(L.verts.size()));
        L.verts.push_back({static_cast<int>(s), frac, std::cos(ang), std::sin(ang), jitter(rng)});
      }
      seg_rings.push_back(ring.vertices);
      L.rings.push_back(std::move(ring));
    }
    for (std::size_t r = 0; r + 1 < seg_rings.size(); ++r) zip(seg_rings[r], seg_rings[r + 1], L.faces);
    cap(seg_rings.front(), L.faces);
    if (seg_rings.size() > 1) cap(seg_rings.back(), L.faces);
  }
  return L;
}

Vertices place(const BodyProportions& b, const ShapeCoefficients& c, const Layout& L,
               const Eigen::Matrix<double, kNumBetas, 1>& beta) {
  std::array<Vec3, kNumJoints> J;
  J[0] = b.joints[0];
  for (int k = 1; k < kNumJoints; ++k) {
    const int p = kSmplParents[k];
    Vec3 scale = Vec3::Ones();
    for (int d = 0; d < kNumBetas; ++d) scale += beta(d) * c.offset[static_cast<std::size_t>(d)][k];
    J[k] = J[p] + (b.joints[k] - b.joints[p]).cwiseProduct(scale);
  }
  Vertices V(static_cast<Eigen::Index>(L.verts.size()), 3);
  for (std::size_t i = 0; i < L.verts.size(); ++i) {
    const auto& spec = L.verts[i];
    const auto s = static_cast<std::size_t>(spec.segment);
    const Segment& seg = b.segments[s];
    double tip_scale = 1.0, girth = 1.0;
    for (int d = 0; d < kNumBetas; ++d) {
      tip_scale += beta(d) * c.tip[s][static_cast<std::size_t>(d)];
      girth += beta(d) * c.girth[s][static_cast<std::size_t>(d)];
    }
    const Vec3 start = J[seg.joint];
    const Vec3 rest_end = seg.end_joint >= 0 ? b.joints[seg.end_joint] : b.joints[seg.joint] + seg.tip_offset;
    const Vec3 end = seg.end_joint >= 0 ? J[seg.end_joint] : start + seg.tip_offset * tip_scale;
    Vec3 e1, e2;
    cross_section(rest_end - b.joints[seg.joint], e1, e2);
    const double g = girth * (1.0 + spec.jitter);
    V.row(static_cast<Eigen::Index>(i)) =
        (start + spec.frac * (end - start) + spec.cos_a * seg.r_lat * g * e1 + spec.sin_a * seg.r_vert * g * e2)
            .transpose();
  }
  return V;
}

BodyTemplate build(Gender g, int n_vertices, std::uint64_t seed) {
  const BodyProportions b = proportions(g);
  const ShapeCoefficients c = shape_coefficients(b.segments);
  std::mt19937_64 rng(seed * 2 + static_cast<std::uint64_t>(g));
  const Layout L = layout(allocate(b, n_vertices), rng);
  const auto n = static_cast<Eigen::Index>(L.verts.size());

  BodyTemplate t;
  const Eigen::Matrix<double, kNumBetas, 1> zero = Eigen::Matrix<double, kNumBetas, 1>::Zero();
  t.rest_vertices = place(b, c, L, zero);
  t.shape_dirs.resize(3 * n, kNumBetas);
  for (int k = 0; k < kNumBetas; ++k) {
    const Vertices moved = place(b, c, L, Eigen::Matrix<double, kNumBetas, 1>::Unit(k));
    const Vertices delta = moved - t.rest_vertices;
    for (Eigen::Index i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d) t.shape_dirs(3 * i + d, k) = delta(i, d);
  }

  // Skinning: rigid in the middle of a segment, blended 50/50 with the
  // neighbouring joint at the segment ends.
  t.skin_weights.setZero(n, kNumJoints);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& spec = L.verts[static_cast<std::size_t>(i)];
    const Segment& seg = b.segments[static_cast<std::size_t>(spec.segment)];
    const int j = seg.joint;
    const int parent = kSmplParents[j];
    double w_parent = 0.0, w_child = 0.0;
    if (parent >= 0 && spec.frac < 0.25) w_parent = 0.5 * (1.0 - spec.frac / 0.25);
    if (seg.end_joint >= 0 && spec.frac > 0.75) w_child = 0.5 * (spec.frac - 0.75) / 0.25;
    t.skin_weights(i, j) = 1.0 - w_parent - w_child;
    if (w_parent > 0) t.skin_weights(i, parent) += w_parent;
    if (w_child > 0) t.skin_weights(i, seg.end_joint) += w_child;
  }

  // Regressor: each joint is the mean of the rings nearest to it on every
  // segment that starts or ends there.
  t.joint_regressor.setZero(kNumJoints, n);
  for (int j = 0; j < kNumJoints; ++j) {
    std::vector<int> picked;
    for (std::size_t s = 0; s < b.segments.size(); ++s) {
      const Segment& seg = b.segments[s];
      const bool starts = seg.joint == j, ends = seg.end_joint == j;
      if (!starts && !ends) continue;
      const Ring* best = nullptr;
      for (const auto& ring : L.rings) {
        if (ring.segment != static_cast<int>(s)) continue;
        const double dist = starts ? ring.frac : 1.0 - ring.frac;
        if (!best || dist < (starts ? best->frac : 1.0 - best->frac)) best = &ring;
      }
      if (best) picked.insert(picked.end(), best->vertices.begin(), best->vertices.end());
    }
    for (int v : picked) t.joint_regressor(j, v) += 1.0 / static_cast<double>(picked.size());
  }

  t.faces.resize(static_cast<Eigen::Index>(L.faces.size()), 3);
  for (std::size_t f = 0; f < L.faces.size(); ++f)
    for (int k = 0; k < 3; ++k) t.faces(static_cast<Eigen::Index>(f), k) = L.faces[f][static_cast<std::size_t>(k)];
  t.validate();
  return t;
}

}  // namespace

TemplateSet make_toy_template(int n_vertices, std::uint64_t seed) {
  if (n_vertices < kNumJoints)
    throw std::invalid_argument("toy template needs at least " + std::to_string(kNumJoints) + " vertices");
  return {build(Gender::male, n_vertices, seed), build(Gender::female, n_vertices, seed)};
}

}  // namespace inbed
