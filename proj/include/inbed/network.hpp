#pragma once

// Conditional denoiser D(x_t, t, c) -> z_t.
//
// Layout: conv_in, n_down_blocks stride-2 residual blocks, two more residual
// blocks at the coarsest resolution, and single-head spatial self-attention
// in front of the last n_attention_blocks residual blocks. Every
// normalisation is adaLN-Zero driven by (time embedding + SMPL latent),
// except in the final residual block which sees neither. The regressor reads
// the global-average-pooled output of every residual block.
//
// Checkpoint key scheme (all f64 arrays, row-major):
//   time_mlp.{0,1}.{weight,bias}       sinusoid -> latent MLP
//   smpl_enc.{0,1}.{weight,bias}       noisy-parameter encoder MLP
//   conv_in.{weight,bias}              (C, 1, 3, 3)
//   block{i}.norm{1,2}.adaln.{weight,bias}   (2C, latent)
//   block{i}.conv{1,2}.{weight,bias}, block{i}.skip.{weight,bias}
//   attn{i}.norm.adaln.*, attn{i}.{q,k,v,out}.{weight,bias}
//   regressor.{0,1}.{weight,bias}

#include <cstdint>
#include <string>
#include <vector>

#include "inbed/body_model.hpp"
#include "inbed/depth_image.hpp"
#include "inbed/diffusion.hpp"
#include "inbed/layers.hpp"
#include "json.hpp"

namespace inbed {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DenoiserConfig {
  int depth_height = 64;  // input depth image size; padded up to the canvas
  int depth_width = 32;
  int n_down_blocks = 6;
  int n_attention_blocks = 3;
  int base_channels = 8;
  int latent_dim = 64;
  int regressor_hidden = 128;
  bool include_gender_in_condition = false;
  // Input encoding: value = (reference_depth - depth) / depth_scale, so the
  // empty bed maps to 0. Padding uses the reference depth.
  double reference_depth = 1.5;
  double depth_scale = 0.1;

  // Canvas extents: depth size rounded up to a multiple of 2^n_down_blocks.
  int canvas_height() const;
  int canvas_width() const;
  int channels_at(int level) const;  // level 0 = conv_in output
  void validate() const;

  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
  bool operator==(const DenoiserConfig&) const = default;
};

// Transformer-style sinusoid: first half sin(t * f_i), second half cos(t * f_i),
// f_i = 10000^(-i / (dim/2)).
nn::Vec embed_time(int t, int dim);

struct ResBlock {
  int in = 0, out = 0, stride = 1;
  nn::AdaLN norm1, norm2;
  nn::Conv2d conv1, conv2;
  bool has_skip_conv = false;
  nn::Conv2d skip;
};

struct AttnBlock {
  int channels = 0;
  nn::AdaLN norm;
  nn::Linear q, k, v, out;
};

class Denoiser {
 public:
  struct ResCache {
    nn::Tensor x;
    nn::AdaLNCache n1, n2;
    nn::Mat h1, h2;
    nn::ConvCache c1, c2, cs;
    nn::Tensor a1, a2, c1_out, skip_in;
  };
  struct AttnCache {
    nn::Tensor x;
    nn::AdaLNCache norm;
    nn::Mat h, q, k, v, p, o;
  };
  struct Workspace {
    nn::Vec t_embed, t_hidden, t_out;
    nn::Vec s_in, s_hidden, s_out;
    nn::Vec cond, cond_act;
    nn::Tensor input;
    nn::ConvCache conv_in;
    std::vector<AttnCache> attn;
    std::vector<ResCache> blocks;
    std::vector<nn::Tensor> outputs;
    nn::Vec pooled, r_hidden;
  };

  explicit Denoiser(DenoiserConfig cfg);

  const DenoiserConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  std::size_t parameter_count() const { return store_.size(); }

  // Deterministic initialisation; every adaLN projection starts at zero.
  void init_weights(std::uint64_t seed);

  nn::Tensor encode_depth(const DepthImage& depth) const;

  nn::Vec encode_smpl_latent(const Latent& x_t, Gender gender) const;
  nn::Vec conditioning(const Latent& x_t, int t, Gender gender) const;

  Latent forward(const nn::Tensor& image, const Latent& x_t, int t, Gender gender, Workspace* ws = nullptr) const;
  // Accumulates d loss / d weights into params().grads().
  void backward(const Workspace& ws, const Latent& grad_out);

  // Access for tests: every adaLN layer in forward order.
  std::vector<const nn::AdaLN*> adaln_layers() const;

 private:
  DenoiserConfig cfg_;
  nn::ParamStore store_;
  nn::Linear time1_, time2_, smpl1_, smpl2_;
  nn::Conv2d conv_in_;
  std::vector<ResBlock> blocks_;
  std::vector<int> attn_index_;  // per block: index into attn_ or -1
  std::vector<AttnBlock> attn_;
  nn::Linear reg1_, reg2_;
};

}  // namespace inbed
