#pragma once

// Gaussian diffusion over the 88-dim body-parameter vector, parameterised by
// x0-prediction: the denoiser returns an estimate z_t of the clean sample.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "inbed/body_model.hpp"

namespace inbed {

using Latent = ParamVector;

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DiffusionSchedule {
  int T = 0;
  std::vector<double> beta;       // sigma_t^2
  std::vector<double> alpha;      // 1 - sigma_t^2
  std::vector<double> alpha_bar;  // prod_{i<=t} alpha_i

  double sigma(int t) const;
  // Std of q(x_{t-1} | x_t, x_0); zero at t == 1 by convention.
  double posterior_std(int t) const;
};

// Linear sigma_t^2 from beta_start (t = 0) to beta_end (t = T-1).
DiffusionSchedule make_schedule(int T, double beta_start, double beta_end);

// Default variance range for T steps: 1e-4 up to min(0.02 * 1000 / T, 0.2).
double default_beta_end(int T);

Latent q_sample(const Latent& x0, int t, const Latent& eps, const DiffusionSchedule& sched);

// Mean of q(x_{t-1} | x_t, x_0 = z). Requires t >= 1.
Latent posterior_mean(const Latent& z, const Latent& x_t, int t, const DiffusionSchedule& sched);

// Ancestral step x_{t-1} = posterior_mean + posterior_std * eps. Requires t >= 1.
Latent ddpm_step(const Latent& z, const Latent& x_t, int t, const Latent& eps, const DiffusionSchedule& sched);

// Uniform-stride descending timesteps: T-1, T-1-k, ... with k = T / n_steps.
std::vector<int> ddim_timesteps(int T, int n_steps);

// x0-prediction denoiser: (x_t, t) -> z_t. The condition is bound by the caller.
using DenoiseFn = std::function<Latent(const Latent& x_t, int t)>;

// Deterministic (eta = 0) accelerated sampling from a seeded standard-normal
// start; returns the denoiser's final x0 estimate.
Latent ddim_sample(const DenoiseFn& denoise, int n_steps, const DiffusionSchedule& sched, std::uint64_t seed,
                   std::vector<int>* visited = nullptr);

// Standard-normal 88-vector from a 64-bit generator.
template <typename Rng>
Latent standard_normal(Rng& rng);

struct LatentStandardizer {
  static constexpr double kStdFloor = 1e-6;
  Latent mean = Latent::Zero();
  Latent std = Latent::Ones();

  // Population mean/std over rows, std floored at kStdFloor.
  static LatentStandardizer fit(const std::vector<Latent>& samples);

  Latent standardize(const Latent& x) const { return (x - mean).cwiseQuotient(std); }
  Latent destandardize(const Latent& z) const { return z.cwiseProduct(std) + mean; }
};

}  // namespace inbed

#include <random>

namespace inbed {
template <typename Rng>
Latent standard_normal(Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Latent e;
  for (int i = 0; i < kParamDim; ++i) e(i) = n01(rng);
  return e;
}
}  // namespace inbed
