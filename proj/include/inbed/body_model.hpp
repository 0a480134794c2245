#pragma once

// SMPL-style parametric body: parameter packing, global-rotation decoding,
// shape blendshapes, forward kinematics and linear blend skinning, plus the
// reverse-mode derivative of the whole mapping (used by the training losses).

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace inbed {

namespace io {
class Archive;
}

inline constexpr int kNumJoints = 24;
inline constexpr int kNumBetas = 10;
inline constexpr int kPoseDim = 69;  // 23 non-root joints x 3
inline constexpr int kParamDim = 88;

// Offsets of each block inside the flat parameter vector [beta | theta | s | u | v].
namespace param_offset {
inline constexpr int beta = 0;
inline constexpr int theta = 10;
inline constexpr int translation = 79;
inline constexpr int rot_sin = 82;
inline constexpr int rot_cos = 85;
}  // namespace param_offset

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using ParamVector = Eigen::Matrix<double, kParamDim, 1>;
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Joints = Eigen::Matrix<double, kNumJoints, 3, Eigen::RowMajor>;

class InvalidRotation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SmplParams {
  Eigen::Matrix<double, kNumBetas, 1> beta = Eigen::Matrix<double, kNumBetas, 1>::Zero();
  // Axis-angle rotation of joints 1..23 relative to their parent.
  Eigen::Matrix<double, kNumJoints - 1, 3, Eigen::RowMajor> theta =
      Eigen::Matrix<double, kNumJoints - 1, 3, Eigen::RowMajor>::Zero();
  Vec3 translation = Vec3::Zero();
  // Global orientation as per-axis (sine-like, cosine-like) pairs: phi_i = atan2(rot_sin_i, rot_cos_i).
  Vec3 rot_sin = Vec3::Zero();
  Vec3 rot_cos = Vec3::Zero();

  // Zero pose, zero shape, identity orientation.
  static SmplParams rest();
};

ParamVector pack(const SmplParams& p);
SmplParams unpack(const ParamVector& x);

enum class Gender : std::uint8_t { male = 0, female = 1 };

// One-hot flag: [1,0] male, [0,1] female.
std::array<double, 2> gender_flag(Gender g);
Gender gender_from_flag(std::span<const double, 2> flag);
const char* gender_name(Gender g);

// Rotation about x, then y, then z in the body's moving frame: R = Rx * Ry * Rz.
Mat3 euler_xyz(const Vec3& angles);

// phi_i = atan2(u_i, v_i) in (-pi, pi]. Each (u_i, v_i) pair is normalised
// first; a pair with norm below 1e-8 throws InvalidRotation.
Vec3 decode_global_rotation(const Vec3& u, const Vec3& v);

Mat3 axis_angle_to_matrix(const Vec3& axis_angle);

// SMPL kinematic tree: pelvis, hips, spine, knees, ..., hands.
inline constexpr std::array<int, kNumJoints> kSmplParents = {-1, 0,  0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                                                              9,  9,  9,  12, 13, 14, 16, 17, 18, 19, 20, 21};
extern const std::array<const char*, kNumJoints> kJointNames;

struct BodyTemplate {
  Vertices rest_vertices;                            // N x 3, metres
  Eigen::MatrixXd shape_dirs;                        // (3N) x 10, row 3*i+d is coordinate d of vertex i
  Eigen::Matrix<double, kNumJoints, Eigen::Dynamic> joint_regressor;  // 24 x N
  std::array<int, kNumJoints> parents = kSmplParents;
  Eigen::Matrix<double, Eigen::Dynamic, kNumJoints, Eigen::RowMajor> skin_weights;  // N x 24
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor> faces;

  int n_vertices() const { return static_cast<int>(rest_vertices.rows()); }

  // Throws TemplateError when any structural invariant is violated.
  void validate() const;
};

struct TemplateSet {
  BodyTemplate male;
  BodyTemplate female;

  const BodyTemplate& get(Gender g) const { return g == Gender::female ? female : male; }
  int n_vertices() const { return male.n_vertices(); }
};

struct BodyMesh {
  Vertices vertices;
  Joints joints;
};

// Procedural capsule body over the 24-joint tree. Deterministic in
// (n_vertices, seed); the female template has narrower shoulders, wider hips
// and a shorter stature. Requires n_vertices >= 24.
TemplateSet make_toy_template(int n_vertices, std::uint64_t seed);

// Template files: arrays "<gender>.rest_vertices" f32 (N,3),
// "<gender>.shape_dirs" f32 (N,3,10), "<gender>.joint_regressor" f32 (24,N),
// "<gender>.kinematic_parents" i32 (24), "<gender>.skin_weights" f32 (N,24),
// "<gender>.faces" i32 (F,3) for gender in {male, female}.
void write_templates(io::Archive& ar, const TemplateSet& set);
TemplateSet read_templates(const io::Archive& ar);

// Intermediates of one forward pass, kept for the reverse pass.
struct PoseTrace {
  const BodyTemplate* tmpl = nullptr;
  Vertices shaped;                        // rest vertices after shape blendshapes
  std::array<Vec3, kNumJoints> rest_joints;
  std::array<Mat3, kNumJoints> local_rot;
  std::array<Mat3, kNumJoints> world_rot;
  std::array<Vec3, kNumJoints> world_trans;  // joint location before global translation
  Vec3 euler = Vec3::Zero();
};

BodyMesh forward(const SmplParams& params, Gender gender, const TemplateSet& templates, PoseTrace* trace = nullptr);

// Gradient of a scalar loss w.r.t. the flat parameter vector, given the
// loss gradients w.r.t. posed vertices and posed joints.
ParamVector backward(const PoseTrace& trace, const SmplParams& params, const Vertices& grad_vertices,
                     const Joints& grad_joints);

}  // namespace inbed
