#pragma once

// Per-sample neural-network primitives with explicit reverse passes.
// Feature maps are (channels x height*width) row-major matrices; parameters
// live in a flat arena addressed by offset so optimizers and checkpoints can
// treat them as one vector.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace inbed::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct Tensor {
  int h = 0, w = 0;
  Mat m;  // channels x (h*w)

  Tensor() = default;
  Tensor(int channels, int height, int width) : h(height), w(width), m(Mat::Zero(channels, height * width)) {}
  int channels() const { return static_cast<int>(m.rows()); }
  int pixels() const { return h * w; }
};

class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::size_t add(const std::string& name, std::vector<std::int64_t> shape);
  std::size_t size() const { return values_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grads() { return grads_; }
  const std::vector<double>& grads() const { return grads_; }
  void zero_grad();

  MatMap mat(std::size_t off, Eigen::Index rows, Eigen::Index cols) { return {values_.data() + off, rows, cols}; }
  ConstMatMap mat(std::size_t off, Eigen::Index rows, Eigen::Index cols) const {
    return {values_.data() + off, rows, cols};
  }
  MatMap grad_mat(std::size_t off, Eigen::Index rows, Eigen::Index cols) { return {grads_.data() + off, rows, cols}; }
  Eigen::Map<Vec> vec(std::size_t off, Eigen::Index n) { return {values_.data() + off, n}; }
  Eigen::Map<const Vec> vec(std::size_t off, Eigen::Index n) const { return {values_.data() + off, n}; }
  Eigen::Map<Vec> grad_vec(std::size_t off, Eigen::Index n) { return {grads_.data() + off, n}; }

 private:
  std::vector<Entry> entries_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}
Mat silu(const Mat& x);
Vec silu(const Vec& x);
// g * silu'(x), elementwise.
Mat silu_backward(const Mat& x, const Mat& g);
Vec silu_backward(const Vec& x, const Vec& g);

struct Linear {
  int in = 0, out = 0;
  std::size_t weight = 0, bias = 0;

  static Linear create(ParamStore& store, const std::string& name, int in, int out);
  Vec forward(const ParamStore& store, const Vec& x) const;
  // Accumulates parameter gradients; returns d loss / d x.
  Vec backward(ParamStore& store, const Vec& x, const Vec& g_out) const;
  void init(ParamStore& store, std::mt19937_64& rng, double gain) const;
};

struct ConvCache {
  Mat cols;
};

// Square kernel, zero padding (k-1)/2.
struct Conv2d {
  int in = 0, out = 0, kernel = 3, stride = 1;
  std::size_t weight = 0, bias = 0;

  static Conv2d create(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride);
  Tensor forward(const ParamStore& store, const Tensor& x, ConvCache& cache) const;
  Tensor backward(ParamStore& store, const Tensor& x, const ConvCache& cache, const Tensor& g_out) const;
  void init(ParamStore& store, std::mt19937_64& rng, double gain) const;
};

// Per-channel normalisation over the spatial extent (no affine parameters).
struct NormCache {
  Mat xhat;
  Vec inv_std;
};
inline constexpr double kNormEps = 1e-5;
Mat channel_norm(const Mat& x, NormCache& cache);
Mat channel_norm_backward(const NormCache& cache, const Mat& g_y);

// adaLN-Zero: out = xhat * (1 + gamma) + beta with (gamma, beta) a linear
// projection of the activated conditioning vector. The projection starts at
// zero. An unmodulated layer is plain normalisation.
struct AdaLNCache {
  NormCache norm;
  Vec gamma, shift;
};

struct AdaLN {
  int channels = 0;
  bool modulated = true;
  Linear proj;  // cond_dim -> 2 * channels (gamma first, then beta)

  static AdaLN create(ParamStore& store, const std::string& name, int channels, int cond_dim, bool modulated);
  Mat forward(const ParamStore& store, const Mat& x, const Vec& cond_act, AdaLNCache& cache) const;
  // Returns d/dx; accumulates into g_cond_act.
  Mat backward(ParamStore& store, const Mat& g_out, const Vec& cond_act, const AdaLNCache& cache,
               Vec& g_cond_act) const;
};

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& g, int h, int w);

}  // namespace inbed::nn
