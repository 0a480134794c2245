#include "inbed/layers.hpp"

#include <stdexcept>

namespace inbed::nn {

std::size_t ParamStore::add(const std::string& name, std::vector<std::int64_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  Entry e{name, std::move(shape), values_.size(), n};
  values_.resize(values_.size() + n, 0.0);
  grads_.resize(values_.size(), 0.0);
  entries_.push_back(std::move(e));
  return entries_.back().offset;
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

Mat silu(const Mat& x) { return x.unaryExpr([](double v) { return silu(v); }); }
Vec silu(const Vec& x) { return x.unaryExpr([](double v) { return silu(v); }); }
Mat silu_backward(const Mat& x, const Mat& g) {
  return g.cwiseProduct(x.unaryExpr([](double v) { return silu_grad(v); }));
}
Vec silu_backward(const Vec& x, const Vec& g) {
  return g.cwiseProduct(x.unaryExpr([](double v) { return silu_grad(v); }));
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", {out, in});
  l.bias = store.add(name + ".bias", {out});
  return l;
}

Vec Linear::forward(const ParamStore& store, const Vec& x) const {
  return store.mat(weight, out, in) * x + store.vec(bias, out);
}

Vec Linear::backward(ParamStore& store, const Vec& x, const Vec& g_out) const {
  store.grad_mat(weight, out, in).noalias() += g_out * x.transpose();
  store.grad_vec(bias, out) += g_out;
  return store.mat(weight, out, in).transpose() * g_out;
}

void Linear::init(ParamStore& store, std::mt19937_64& rng, double gain) const {
  std::normal_distribution<double> n01(0.0, gain / std::sqrt(static_cast<double>(in)));
  auto w = store.mat(weight, out, in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n01(rng);
  store.vec(bias, out).setZero();
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride) {
  Conv2d c;
  c.in = in;
  c.out = out;
  c.kernel = kernel;
  c.stride = stride;
  c.weight = store.add(name + ".weight", {out, in, kernel, kernel});
  c.bias = store.add(name + ".bias", {out});
  return c;
}

void Conv2d::init(ParamStore& store, std::mt19937_64& rng, double gain) const {
  const double fan_in = static_cast<double>(in * kernel * kernel);
  std::normal_distribution<double> n01(0.0, gain / std::sqrt(fan_in));
  auto w = store.mat(weight, out, in * kernel * kernel);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n01(rng);
  store.vec(bias, out).setZero();
}

namespace {

void im2col(const Tensor& x, int k, int stride, int ho, int wo, Mat& cols) {
  const int pad = (k - 1) / 2;
  const int c = x.channels();
  cols.setZero(c * k * k, ho * wo);
  for (int ci = 0; ci < c; ++ci) {
    const double* src = x.m.row(ci).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* dst = cols.row((ci * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= x.h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < x.w) dst[oy * wo + ox] = src[iy * x.w + ix];
          }
        }
      }
  }
}

void col2im(const Mat& g_cols, int k, int stride, int ho, int wo, Tensor& g_x) {
  const int pad = (k - 1) / 2;
  for (int ci = 0; ci < g_x.channels(); ++ci) {
    double* dst = g_x.m.row(ci).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* src = g_cols.row((ci * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= g_x.h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < g_x.w) dst[iy * g_x.w + ix] += src[oy * wo + ox];
          }
        }
      }
  }
}

}  // namespace

Tensor Conv2d::forward(const ParamStore& store, const Tensor& x, ConvCache& cache) const {
  if (x.channels() != in) throw std::invalid_argument("conv input channel mismatch");
  const int pad = (kernel - 1) / 2;
  const int ho = (x.h + 2 * pad - kernel) / stride + 1;
  const int wo = (x.w + 2 * pad - kernel) / stride + 1;
  if (kernel == 1 && stride == 1)
    cache.cols = x.m;
  else
    im2col(x, kernel, stride, ho, wo, cache.cols);
  Tensor y;
  y.h = ho;
  y.w = wo;
  y.m.noalias() = store.mat(weight, out, in * kernel * kernel) * cache.cols;
  y.m.colwise() += store.vec(bias, out);
  return y;
}

Tensor Conv2d::backward(ParamStore& store, const Tensor& x, const ConvCache& cache, const Tensor& g_out) const {
  store.grad_mat(weight, out, in * kernel * kernel).noalias() += g_out.m * cache.cols.transpose();
  store.grad_vec(bias, out) += g_out.m.rowwise().sum();
  Mat g_cols = store.mat(weight, out, in * kernel * kernel).transpose() * g_out.m;
  Tensor g_x(in, x.h, x.w);
  if (kernel == 1 && stride == 1)
    g_x.m = std::move(g_cols);
  else
    col2im(g_cols, kernel, stride, g_out.h, g_out.w, g_x);
  return g_x;
}

Mat channel_norm(const Mat& x, NormCache& cache) {
  const double n = static_cast<double>(x.cols());
  const Vec mean = x.rowwise().sum() / n;
  Mat centered = x.colwise() - mean;
  const Vec var = centered.rowwise().squaredNorm() / n;
  cache.inv_std = (var.array() + kNormEps).rsqrt();
  cache.xhat = cache.inv_std.asDiagonal() * centered;
  return cache.xhat;
}

Mat channel_norm_backward(const NormCache& cache, const Mat& g_y) {
  const double n = static_cast<double>(g_y.cols());
  const Vec sum_g = g_y.rowwise().sum();
  const Vec sum_gy = g_y.cwiseProduct(cache.xhat).rowwise().sum();
  Mat g_x = g_y * n;
  g_x.colwise() -= sum_g;
  g_x -= sum_gy.asDiagonal() * cache.xhat;
  return (cache.inv_std / n).asDiagonal() * g_x;
}

AdaLN AdaLN::create(ParamStore& store, const std::string& name, int channels, int cond_dim, bool modulated) {
  AdaLN a;
  a.channels = channels;
  a.modulated = modulated;
  if (modulated) a.proj = Linear::create(store, name + ".adaln", cond_dim, 2 * channels);
  return a;
}

Mat AdaLN::forward(const ParamStore& store, const Mat& x, const Vec& cond_act, AdaLNCache& cache) const {
  const Mat xhat = channel_norm(x, cache.norm);
  if (!modulated) return xhat;
  const Vec gb = proj.forward(store, cond_act);
  cache.gamma = gb.head(channels);
  cache.shift = gb.tail(channels);
  Mat y = (cache.gamma.array() + 1.0).matrix().asDiagonal() * xhat;
  y.colwise() += cache.shift;
  return y;
}

Mat AdaLN::backward(ParamStore& store, const Mat& g_out, const Vec& cond_act, const AdaLNCache& cache,
                    Vec& g_cond_act) const {
  if (!modulated) return channel_norm_backward(cache.norm, g_out);
  Vec g_gb(2 * channels);
  g_gb.head(channels) = g_out.cwiseProduct(cache.norm.xhat).rowwise().sum();
  g_gb.tail(channels) = g_out.rowwise().sum();
  g_cond_act += proj.backward(store, cond_act, g_gb);
  const Mat g_xhat = (cache.gamma.array() + 1.0).matrix().asDiagonal() * g_out;
  return channel_norm_backward(cache.norm, g_xhat);
}

Tensor avg_pool2(const Tensor& x) {
  Tensor y(x.channels(), x.h / 2, x.w / 2);
  for (int c = 0; c < x.channels(); ++c)
    for (int oy = 0; oy < y.h; ++oy)
      for (int ox = 0; ox < y.w; ++ox) {
        const int i = 2 * oy * x.w + 2 * ox;
        y.m(c, oy * y.w + ox) = 0.25 * (x.m(c, i) + x.m(c, i + 1) + x.m(c, i + x.w) + x.m(c, i + x.w + 1));
      }
  return y;
}

Tensor avg_pool2_backward(const Tensor& g, int h, int w) {
  Tensor gx(g.channels(), h, w);
  for (int c = 0; c < g.channels(); ++c)
    for (int oy = 0; oy < g.h; ++oy)
      for (int ox = 0; ox < g.w; ++ox) {
        const double v = 0.25 * g.m(c, oy * g.w + ox);
        const int i = 2 * oy * w + 2 * ox;
        gx.m(c, i) += v;
        gx.m(c, i + 1) += v;
        gx.m(c, i + w) += v;
        gx.m(c, i + w + 1) += v;
      }
  return gx;
}

}  // namespace inbed::nn
