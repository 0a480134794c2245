#pragma once

// Synthetic in-bed depth data: body sampling, overhead height-field
// rendering, blanket covers, the pseudo-real domain shift, augmentation,
// loss-normalisation statistics and the dataset container.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "inbed/body_model.hpp"
#include "inbed/depth_image.hpp"
#include "inbed/diffusion.hpp"
#include "json.hpp"

namespace inbed {

enum class Cover : std::uint8_t { uncover = 0, cover1 = 1, cover2 = 2 };
enum class Domain : std::uint8_t { synthetic = 0, pseudo_real = 1 };

inline constexpr std::array<Cover, 3> kAllCovers = {Cover::uncover, Cover::cover1, Cover::cover2};
const char* cover_name(Cover c);
Cover cover_from_name(const std::string& name);
const char* domain_name(Domain d);

// Orthographic overhead camera above a bed centred at the world origin.
// World frame: +x toward the head end (image rows increase with x), +y across
// the bed (columns increase with y), +z up. z = 0 is the floor.
struct SceneConfig {
  double camera_height = 2.0;
  double bed_surface_height = 0.5;
  double bed_length = 2.1;
  double bed_width = 1.05;
  double pixel_pitch = 2.1 / 64.0;
  int image_height = 64;
  int image_width = 32;

  double bed_depth() const { return camera_height - bed_surface_height; }
  double row_x(int r) const { return (r + 0.5 - 0.5 * image_height) * pixel_pitch; }
  double col_y(int c) const { return (c + 0.5 - 0.5 * image_width) * pixel_pitch; }
  void validate() const;
  nlohmann::json to_json() const;
  static SceneConfig from_json(const nlohmann::json& j);
  bool operator==(const SceneConfig&) const = default;
};

struct SampleRanges {
  double beta_min = -2.0, beta_max = 2.0;
  std::array<double, kPoseDim> theta_min{}, theta_max{};
  // Global orientation (Euler x=roll about the body axis, y=pitch, z=yaw).
  Vec3 rot_min = Vec3(-0.3, -0.08, -0.25), rot_max = Vec3(0.3, 0.08, 0.25);
  double lateral_probability = 0.4;  // probability of a side-lying roll instead
  double lateral_roll_min = 1.2, lateral_roll_max = 1.6;
  double tx_min = -0.05, tx_max = 0.12;
  double ty_min = -0.12, ty_max = 0.12;
  double female_probability = 0.5;
  double sink = 0.0;  // how far the lowest vertex sits below the bed surface
  bool has_point_beta = false;  // use point_beta instead of the uniform range
  Eigen::Matrix<double, kNumBetas, 1> point_beta = Eigen::Matrix<double, kNumBetas, 1>::Zero();

  // Anatomical joint-limit table for lying poses.
  static SampleRanges defaults();
  // Every range collapsed to the given values.
  static SampleRanges point(const SmplParams& p, Gender g);
};

struct SampledBody {
  SmplParams params;
  Gender gender = Gender::male;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Uniform draws of shape, joint angles and in-bed translation; the vertical
// translation rests the body on the mattress. Rejects bodies whose footprint
// leaves the bed (up to 100 attempts).
SampledBody sample_params(std::mt19937_64& rng, const SampleRanges& ranges, const TemplateSet& templates,
                          const SceneConfig& scene);

bool footprint_inside_bed(const BodyMesh& mesh, const SceneConfig& scene);

struct RenderResult {
  DepthImage depth;
  bool clipped = false;  // part of the mesh fell outside the image
};

// pixel = camera_height - max(bed surface, highest mesh surface over the pixel centre)
RenderResult render_depth(const Vertices& vertices, const Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>& faces,
                          const SceneConfig& scene);

struct CoverStyle {
  int envelope_radius;
  double smooth_sigma;
  double offset;
};
CoverStyle cover_style(Cover c);

// Blanket over the rows below a sampled chest line: the covered surface is the
// Gaussian-smoothed upper envelope plus a thickness offset, and never lower
// than the uncovered surface.
DepthImage apply_cover(const DepthImage& depth, Cover cover, std::mt19937_64& rng, int* chest_row = nullptr);
DepthImage apply_cover_at(const DepthImage& depth, Cover cover, int chest_row);

struct ShiftProfile {
  double noise_std = 0.005;
  double bias = 0.0;      // constant offset for one participant
  double blur = 1.0;      // 0 disables, 1 = one-pixel binomial blur
  double sag = 0.08;      // paraboloid mattress sag at the bed centre
  double scale = 0.05;    // relative depth-scale error around the bed level

  static ShiftProfile none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
  nlohmann::json to_json() const;
  static ShiftProfile from_json(const nlohmann::json& j);
};

DepthImage domain_shift(const DepthImage& depth, std::mt19937_64& rng, const ShiftProfile& profile,
                        const SceneConfig& scene);

struct AugmentPolicy {
  double p_rotate = 0.5;
  double max_rotate_deg = 15.0;
  double p_erase = 0.5;
  double max_erase_fraction = 0.2;
  double p_noise = 0.5;
  double max_noise_std = 0.01;
  bool rotate_labels = false;  // counter-rotate the ground truth with the image

  static AugmentPolicy off() { return {0, 15, 0, 0.2, 0, 0.01, false}; }
  nlohmann::json to_json() const;
  static AugmentPolicy from_json(const nlohmann::json& j);
};

DepthImage rotate_image(const DepthImage& depth, double angle_rad, float fill);
void erase_rect(DepthImage& depth, int row, int col, int height, int width, float fill);

struct Augmented {
  DepthImage depth;
  double rotation = 0.0;  // radians applied about the image centre
};
Augmented augment(const DepthImage& depth, std::mt19937_64& rng, const AugmentPolicy& policy,
                  const SceneConfig& scene);

// Rotates the body about the vertical axis through the bed centre so that its
// rendering matches rotate_image(render, angle).
SmplParams rotate_params_about_vertical(const SmplParams& params, double angle_rad, Gender gender,
                                        const TemplateSet& templates);

struct Sample {
  DepthImage depth;
  ParamVector params = ParamVector::Zero();  // values are exactly representable in f32
  Gender gender = Gender::male;
  Cover cover = Cover::uncover;
  Domain domain = Domain::synthetic;
  std::int32_t participant = 0;

  bool operator==(const Sample& o) const;
};

struct Dataset {
  SceneConfig scene;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<Sample> samples;
};

struct NormStats {
  static constexpr double kFloor = 1e-6;
  double sigma_beta = 1.0, sigma_theta = 1.0, sigma_psi = 1.0, sigma_joints = 1.0, sigma_vertices = 1.0;
  LatentStandardizer latent;

  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
};

NormStats compute_norm_stats(const std::vector<Sample>& samples, const TemplateSet& templates);

struct GenerationConfig {
  SceneConfig scene;
  SampleRanges ranges = SampleRanges::defaults();
  int n_samples = 100;
  std::uint64_t seed = 0;
  Domain domain = Domain::synthetic;
  ShiftProfile shift;
  double bias_max = 0.03;  // participant bias ~ U(-bias_max, bias_max)
  int first_participant = 0;
  int n_participants = 1;
};

// Sample i is a pure function of (seed, i); participant biases are a pure
// function of (seed of the shift, participant id) and independent of split.
Sample generate_sample(const GenerationConfig& cfg, const TemplateSet& templates, int index);
Dataset generate_dataset(const GenerationConfig& cfg, const TemplateSet& templates);
double participant_bias(double bias_max, int participant);

inline constexpr int kDatasetVersion = 1;
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace inbed
