#pragma once

// Miniature scenes, models and datasets shared by the training-level tests.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "inbed/data.hpp"
#include "inbed/network.hpp"
#include "inbed/train.hpp"

namespace fixture {

inline const inbed::TemplateSet& toy() {
  static const inbed::TemplateSet t = inbed::make_toy_template(240, 0);
  return t;
}

// 16 x 16 pixels over the full bed length.
inline inbed::SceneConfig mini_scene() {
  inbed::SceneConfig s;
  s.pixel_pitch = 2.1 / 16.0;
  s.image_height = 16;
  s.image_width = 16;
  return s;
}

inline inbed::DenoiserConfig mini_model(const inbed::SceneConfig& s = mini_scene()) {
  inbed::DenoiserConfig c;
  c.depth_height = s.image_height;
  c.depth_width = s.image_width;
  c.n_down_blocks = 2;
  c.n_attention_blocks = 1;
  c.base_channels = 4;
  c.latent_dim = 16;
  c.regressor_hidden = 32;
  c.reference_depth = s.bed_depth();
  return c;
}

inline inbed::Dataset mini_dataset(int n, std::uint64_t seed, inbed::Domain domain = inbed::Domain::synthetic) {
  inbed::GenerationConfig g;
  g.scene = mini_scene();
  g.n_samples = n;
  g.seed = seed;
  g.domain = domain;
  g.n_participants = 4;
  return inbed::generate_dataset(g, toy());
}

inline inbed::TrainConfig mini_train(inbed::Stage stage = inbed::Stage::synthetic) {
  inbed::TrainConfig t;
  t.stage = stage;
  t.batch_size = 4;
  t.steps_total = 10;
  t.epochs = 2;
  t.lr_init = 1e-3;
  t.seed = 5;
  return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("inbed_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace fixture
