#include "inbed/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace inbed {

using nn::Mat;
using nn::Tensor;
using nn::Vec;

namespace {

int round_up(int v, int m) { return (v + m - 1) / m * m; }

Mat linear_cols(const nn::ParamStore& store, const nn::Linear& l, const Mat& x) {
  Mat y = store.mat(l.weight, l.out, l.in) * x;
  y.colwise() += store.vec(l.bias, l.out);
  return y;
}

Mat linear_cols_backward(nn::ParamStore& store, const nn::Linear& l, const Mat& x, const Mat& g) {
  store.grad_mat(l.weight, l.out, l.in).noalias() += g * x.transpose();
  store.grad_vec(l.bias, l.out) += g.rowwise().sum();
  return store.mat(l.weight, l.out, l.in).transpose() * g;
}

Tensor like(const Tensor& shape_of, Mat m) {
  Tensor t;
  t.h = shape_of.h;
  t.w = shape_of.w;
  t.m = std::move(m);
  return t;
}

}  // namespace

int DenoiserConfig::canvas_height() const { return round_up(depth_height, 1 << n_down_blocks); }
int DenoiserConfig::canvas_width() const { return round_up(depth_width, 1 << n_down_blocks); }

int DenoiserConfig::channels_at(int level) const {
  return std::min(base_channels << std::min(level, 20), 8 * base_channels);
}

void DenoiserConfig::validate() const {
  if (depth_height < 1 || depth_width < 1) throw ConfigError("depth image size must be positive");
  if (n_down_blocks < 1 || n_down_blocks > 12) throw ConfigError("n_down_blocks must lie in [1, 12]");
  if (n_attention_blocks < 0 || n_attention_blocks > n_down_blocks)
    throw ConfigError("n_attention_blocks must lie in [0, n_down_blocks]");
  if (base_channels < 1 || latent_dim < 2 || latent_dim % 2 != 0 || regressor_hidden < 1)
    throw ConfigError("channel/latent widths must be positive (latent_dim even)");
  if (!(depth_scale > 0.0)) throw ConfigError("depth_scale must be positive");
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"depth_height", depth_height},
          {"depth_width", depth_width},
          {"n_down_blocks", n_down_blocks},
          {"n_attention_blocks", n_attention_blocks},
          {"base_channels", base_channels},
          {"latent_dim", latent_dim},
          {"regressor_hidden", regressor_hidden},
          {"include_gender_in_condition", include_gender_in_condition},
          {"reference_depth", reference_depth},
          {"depth_scale", depth_scale}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.depth_height = j.at("depth_height");
  c.depth_width = j.at("depth_width");
  c.n_down_blocks = j.at("n_down_blocks");
  c.n_attention_blocks = j.at("n_attention_blocks");
  c.base_channels = j.at("base_channels");
  c.latent_dim = j.at("latent_dim");
  c.regressor_hidden = j.at("regressor_hidden");
  c.include_gender_in_condition = j.at("include_gender_in_condition");
  c.reference_depth = j.at("reference_depth");
  c.depth_scale = j.at("depth_scale");
  c.validate();
  return c;
}

Vec embed_time(int t, int dim) {
  const int half = dim / 2;
  Vec e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e(i) = std::sin(t * freq);
    e(half + i) = std::cos(t * freq);
  }
  return e;
}

Denoiser::Denoiser(DenoiserConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int D = cfg_.latent_dim;
  time1_ = nn::Linear::create(store_, "time_mlp.0", D, D);
  time2_ = nn::Linear::create(store_, "time_mlp.1", D, D);
  const int smpl_in = kParamDim + (cfg_.include_gender_in_condition ? 2 : 0);
  smpl1_ = nn::Linear::create(store_, "smpl_enc.0", smpl_in, D);
  smpl2_ = nn::Linear::create(store_, "smpl_enc.1", D, D);
  conv_in_ = nn::Conv2d::create(store_, "conv_in", 1, cfg_.channels_at(0), 3, 1);

  const int n_blocks = cfg_.n_down_blocks + 2;
  int channels = cfg_.channels_at(0);
  for (int b = 0; b < n_blocks; ++b) {
    const bool attn_here = b >= n_blocks - cfg_.n_attention_blocks;
    if (attn_here) {
      const std::string an = "attn" + std::to_string(attn_.size());
      AttnBlock a;
      a.channels = channels;
      a.norm = nn::AdaLN::create(store_, an + ".norm", channels, D, true);
      a.q = nn::Linear::create(store_, an + ".q", channels, channels);
      a.k = nn::Linear::create(store_, an + ".k", channels, channels);
      a.v = nn::Linear::create(store_, an + ".v", channels, channels);
      a.out = nn::Linear::create(store_, an + ".out", channels, channels);
      attn_index_.push_back(static_cast<int>(attn_.size()));
      attn_.push_back(a);
    } else {
      attn_index_.push_back(-1);
    }
    const std::string bn = "block" + std::to_string(b);
    const bool down = b < cfg_.n_down_blocks;
    const int out = down ? cfg_.channels_at(b + 1) : channels;
    const bool modulated = b != n_blocks - 1;
    ResBlock r;
    r.in = channels;
    r.out = out;
    r.stride = down ? 2 : 1;
    r.norm1 = nn::AdaLN::create(store_, bn + ".norm1", channels, D, modulated);
    r.conv1 = nn::Conv2d::create(store_, bn + ".conv1", channels, out, 3, r.stride);
    r.norm2 = nn::AdaLN::create(store_, bn + ".norm2", out, D, modulated);
    r.conv2 = nn::Conv2d::create(store_, bn + ".conv2", out, out, 3, 1);
    r.has_skip_conv = channels != out;
    if (r.has_skip_conv) r.skip = nn::Conv2d::create(store_, bn + ".skip", channels, out, 1, 1);
    blocks_.push_back(r);
    channels = out;
  }
  int pooled = 0;
  for (const auto& r : blocks_) pooled += r.out;
  reg1_ = nn::Linear::create(store_, "regressor.0", pooled, cfg_.regressor_hidden);
  reg2_ = nn::Linear::create(store_, "regressor.1", cfg_.regressor_hidden, kParamDim);
}

void Denoiser::init_weights(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double relu_gain = std::sqrt(2.0);
  time1_.init(store_, rng, 1.0);
  time2_.init(store_, rng, 1.0);
  smpl1_.init(store_, rng, 1.0);
  smpl2_.init(store_, rng, 1.0);
  conv_in_.init(store_, rng, relu_gain);
  std::size_t a = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (attn_index_[b] >= 0) {
      const auto& at = attn_[a++];
      at.q.init(store_, rng, 1.0);
      at.k.init(store_, rng, 1.0);
      at.v.init(store_, rng, 1.0);
      at.out.init(store_, rng, 0.5);
    }
    const auto& r = blocks_[b];
    r.conv1.init(store_, rng, relu_gain);
    r.conv2.init(store_, rng, 0.5 * relu_gain);
    if (r.has_skip_conv) r.skip.init(store_, rng, 1.0);
  }
  reg1_.init(store_, rng, relu_gain);
  reg2_.init(store_, rng, 0.1);
  // adaLN-Zero: modulation projections start at exactly zero.
  for (const auto* l : adaln_layers()) {
    store_.mat(l->proj.weight, l->proj.out, l->proj.in).setZero();
    store_.vec(l->proj.bias, l->proj.out).setZero();
  }
}

std::vector<const nn::AdaLN*> Denoiser::adaln_layers() const {
  std::vector<const nn::AdaLN*> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (attn_index_[b] >= 0) out.push_back(&attn_[static_cast<std::size_t>(attn_index_[b])].norm);
    if (blocks_[b].norm1.modulated) out.push_back(&blocks_[b].norm1);
    if (blocks_[b].norm2.modulated) out.push_back(&blocks_[b].norm2);
  }
  return out;
}

Tensor Denoiser::encode_depth(const DepthImage& depth) const {
  if (depth.height != cfg_.depth_height || depth.width != cfg_.depth_width)
    throw ConfigError("depth image is " + std::to_string(depth.height) + "x" + std::to_string(depth.width) +
                      ", network expects " + std::to_string(cfg_.depth_height) + "x" +
                      std::to_string(cfg_.depth_width));
  Tensor t(1, cfg_.canvas_height(), cfg_.canvas_width());
  const int r0 = (t.h - depth.height) / 2, c0 = (t.w - depth.width) / 2;
  for (int r = 0; r < depth.height; ++r)
    for (int c = 0; c < depth.width; ++c)
      t.m(0, (r + r0) * t.w + c + c0) = (cfg_.reference_depth - depth.at(r, c)) / cfg_.depth_scale;
  return t;
}

Vec Denoiser::encode_smpl_latent(const Latent& x_t, Gender gender) const {
  Vec in(smpl1_.in);
  in.head(kParamDim) = x_t;
  if (cfg_.include_gender_in_condition) {
    const auto flag = gender_flag(gender);
    in(kParamDim) = flag[0];
    in(kParamDim + 1) = flag[1];
  }
  return smpl2_.forward(store_, nn::silu(smpl1_.forward(store_, in)));
}

Vec Denoiser::conditioning(const Latent& x_t, int t, Gender gender) const {
  const Vec te = time2_.forward(store_, nn::silu(time1_.forward(store_, embed_time(t, cfg_.latent_dim))));
  return te + encode_smpl_latent(x_t, gender);
}

Latent Denoiser::forward(const Tensor& image, const Latent& x_t, int t, Gender gender, Workspace* wsp) const {
  if (image.channels() != 1 || image.h != cfg_.canvas_height() || image.w != cfg_.canvas_width())
    throw ConfigError("input tensor does not match the network canvas");
  Workspace local;
  Workspace& ws = wsp ? *wsp : local;

  ws.t_embed = embed_time(t, cfg_.latent_dim);
  ws.t_hidden = time1_.forward(store_, ws.t_embed);
  ws.t_out = time2_.forward(store_, nn::silu(ws.t_hidden));
  ws.s_in.resize(smpl1_.in);
  ws.s_in.head(kParamDim) = x_t;
  if (cfg_.include_gender_in_condition) {
    const auto flag = gender_flag(gender);
    ws.s_in(kParamDim) = flag[0];
    ws.s_in(kParamDim + 1) = flag[1];
  }
  ws.s_hidden = smpl1_.forward(store_, ws.s_in);
  ws.s_out = smpl2_.forward(store_, nn::silu(ws.s_hidden));
  ws.cond = ws.t_out + ws.s_out;
  ws.cond_act = nn::silu(ws.cond);
  const Vec& ca = ws.cond_act;

  ws.input = image;
  Tensor h = conv_in_.forward(store_, image, ws.conv_in);
  ws.attn.assign(attn_.size(), {});
  ws.blocks.assign(blocks_.size(), {});
  ws.outputs.assign(blocks_.size(), {});

  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (attn_index_[b] >= 0) {
      const auto& A = attn_[static_cast<std::size_t>(attn_index_[b])];
      auto& c = ws.attn[static_cast<std::size_t>(attn_index_[b])];
      c.x = h;
      c.h = A.norm.forward(store_, h.m, ca, c.norm);
      c.q = linear_cols(store_, A.q, c.h);
      c.k = linear_cols(store_, A.k, c.h);
      c.v = linear_cols(store_, A.v, c.h);
      Mat s = c.q.transpose() * c.k / std::sqrt(static_cast<double>(A.channels));
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      c.p = std::move(s);
      c.o = c.v * c.p.transpose();
      h.m += linear_cols(store_, A.out, c.o);
    }
    const auto& R = blocks_[b];
    auto& c = ws.blocks[b];
    c.x = h;
    c.h1 = R.norm1.forward(store_, h.m, ca, c.n1);
    c.a1 = like(h, nn::silu(c.h1));
    c.c1_out = R.conv1.forward(store_, c.a1, c.c1);
    c.h2 = R.norm2.forward(store_, c.c1_out.m, ca, c.n2);
    c.a2 = like(c.c1_out, nn::silu(c.h2));
    Tensor y = R.conv2.forward(store_, c.a2, c.c2);
    c.skip_in = R.stride == 2 ? nn::avg_pool2(h) : h;
    if (R.has_skip_conv)
      y.m += R.skip.forward(store_, c.skip_in, c.cs).m;
    else
      y.m += c.skip_in.m;
    ws.outputs[b] = y;
    h = std::move(y);
  }

  int total = 0;
  for (const auto& r : blocks_) total += r.out;
  ws.pooled.resize(total);
  int off = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& o = ws.outputs[b];
    ws.pooled.segment(off, o.channels()) = o.m.rowwise().mean();
    off += o.channels();
  }
  ws.r_hidden = reg1_.forward(store_, ws.pooled);
  return reg2_.forward(store_, nn::silu(ws.r_hidden));
}

void Denoiser::backward(const Workspace& ws, const Latent& grad_out) {
  const Vec& ca = ws.cond_act;
  Vec g_ca = Vec::Zero(ca.size());

  const Vec g_rh = nn::silu_backward(ws.r_hidden, reg2_.backward(store_, nn::silu(ws.r_hidden), grad_out));
  const Vec g_pooled = reg1_.backward(store_, ws.pooled, g_rh);

  std::vector<int> offsets(blocks_.size());
  int off = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    offsets[b] = off;
    off += blocks_[b].out;
  }

  Tensor g;  // gradient w.r.t. the output of the current block
  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const auto& R = blocks_[bi];
    const auto& c = ws.blocks[bi];
    const auto& out = ws.outputs[bi];
    if (g.m.size() == 0) g = Tensor(out.channels(), out.h, out.w);
    g.m.colwise() += g_pooled.segment(offsets[bi], out.channels()) / static_cast<double>(out.pixels());

    const Tensor g_a2 = R.conv2.backward(store_, c.a2, c.c2, g);
    const Mat g_h2 = nn::silu_backward(c.h2, g_a2.m);
    const Tensor g_c1 = like(c.c1_out, R.norm2.backward(store_, g_h2, ca, c.n2, g_ca));
    const Tensor g_a1 = R.conv1.backward(store_, c.a1, c.c1, g_c1);
    const Mat g_h1 = nn::silu_backward(c.h1, g_a1.m);
    Tensor g_x = like(c.x, R.norm1.backward(store_, g_h1, ca, c.n1, g_ca));
    const Tensor g_skip = R.has_skip_conv ? R.skip.backward(store_, c.skip_in, c.cs, g) : g;
    if (R.stride == 2)
      g_x.m += nn::avg_pool2_backward(g_skip, c.x.h, c.x.w).m;
    else
      g_x.m += g_skip.m;

    if (attn_index_[bi] >= 0) {
      const auto& A = attn_[static_cast<std::size_t>(attn_index_[bi])];
      const auto& ac = ws.attn[static_cast<std::size_t>(attn_index_[bi])];
      const double scale = 1.0 / std::sqrt(static_cast<double>(A.channels));
      const Mat g_o = linear_cols_backward(store_, A.out, ac.o, g_x.m);
      const Mat g_v = g_o * ac.p;
      const Mat g_p = g_o.transpose() * ac.v;
      Mat g_s = ac.p.cwiseProduct(g_p);
      const Vec row_dot = g_s.rowwise().sum();
      g_s -= row_dot.asDiagonal() * ac.p;
      const Mat g_q = ac.k * g_s.transpose() * scale;
      const Mat g_k = ac.q * g_s * scale;
      Mat g_h = linear_cols_backward(store_, A.q, ac.h, g_q);
      g_h += linear_cols_backward(store_, A.k, ac.h, g_k);
      g_h += linear_cols_backward(store_, A.v, ac.h, g_v);
      g_x.m += A.norm.backward(store_, g_h, ca, ac.norm, g_ca);
    }
    g = std::move(g_x);
  }
  conv_in_.backward(store_, ws.input, ws.conv_in, g);

  const Vec g_cond = nn::silu_backward(ws.cond, g_ca);
  const Vec g_th = nn::silu_backward(ws.t_hidden, time2_.backward(store_, nn::silu(ws.t_hidden), g_cond));
  time1_.backward(store_, ws.t_embed, g_th);
  const Vec g_sh = nn::silu_backward(ws.s_hidden, smpl2_.backward(store_, nn::silu(ws.s_hidden), g_cond));
  smpl1_.backward(store_, ws.s_in, g_sh);
}

}  // namespace inbed
