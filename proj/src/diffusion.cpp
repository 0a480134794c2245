#include "inbed/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace inbed {

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ScheduleError("diffusion needs at least one timestep");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ScheduleError("variance range must satisfy 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta.resize(static_cast<std::size_t>(T));
  s.alpha.resize(static_cast<std::size_t>(T));
  s.alpha_bar.resize(static_cast<std::size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
    s.beta[static_cast<std::size_t>(t)] = b;
    s.alpha[static_cast<std::size_t>(t)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<std::size_t>(t)] = prod;
  }
  return s;
}

double default_beta_end(int T) { return std::min(0.02 * 1000.0 / T, 0.2); }

double DiffusionSchedule::sigma(int t) const { return std::sqrt(beta.at(static_cast<std::size_t>(t))); }

double DiffusionSchedule::posterior_std(int t) const {
  if (t < 1 || t >= T) throw ScheduleError("posterior std needs 1 <= t < T");
  if (t == 1) return 0.0;
  const auto u = static_cast<std::size_t>(t);
  return std::sqrt((1.0 - alpha_bar[u - 1]) / (1.0 - alpha_bar[u]) * (1.0 - alpha[u]));
}

Latent q_sample(const Latent& x0, int t, const Latent& eps, const DiffusionSchedule& sched) {
  const double ab = sched.alpha_bar.at(static_cast<std::size_t>(t));
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Latent posterior_mean(const Latent& z, const Latent& x_t, int t, const DiffusionSchedule& sched) {
  if (t < 1 || t >= sched.T) throw ScheduleError("posterior mean needs 1 <= t < T, got t=" + std::to_string(t));
  const auto u = static_cast<std::size_t>(t);
  const double a = sched.alpha[u], ab = sched.alpha_bar[u], ab_prev = sched.alpha_bar[u - 1];
  const double cz = std::sqrt(ab_prev) * (1.0 - a) / (1.0 - ab);
  const double cx = std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
  return cz * z + cx * x_t;
}

Latent ddpm_step(const Latent& z, const Latent& x_t, int t, const Latent& eps, const DiffusionSchedule& sched) {
  const Latent mu = posterior_mean(z, x_t, t, sched);
  if (t == 1) return mu;
  return mu + sched.posterior_std(t) * eps;
}

std::vector<int> ddim_timesteps(int T, int n_steps) {
  if (n_steps < 1 || n_steps > T)
    throw ScheduleError("DDIM step count must lie in [1, " + std::to_string(T) + "], got " + std::to_string(n_steps));
  const int stride = T / n_steps;
  std::vector<int> ts;
  for (int i = 0; i < n_steps; ++i) ts.push_back(T - 1 - i * stride);
  return ts;
}

Latent ddim_sample(const DenoiseFn& denoise, int n_steps, const DiffusionSchedule& sched, std::uint64_t seed,
                   std::vector<int>* visited) {
  const auto ts = ddim_timesteps(sched.T, n_steps);
  std::mt19937_64 rng(seed);
  Latent x = standard_normal(rng);
  Latent z = Latent::Zero();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    if (visited) visited->push_back(t);
    z = denoise(x, t);
    if (i + 1 == ts.size()) break;
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = sched.alpha_bar[static_cast<std::size_t>(ts[i + 1])];
    const Latent eps_hat = (x - std::sqrt(ab) * z) / std::sqrt(1.0 - ab);
    x = std::sqrt(ab_prev) * z + std::sqrt(1.0 - ab_prev) * eps_hat;
  }
  return z;
}

LatentStandardizer LatentStandardizer::fit(const std::vector<Latent>& samples) {
  if (samples.empty()) throw std::invalid_argument("cannot fit a standardizer on no samples");
  LatentStandardizer st;
  std::vector<double> col(samples.size());
  const double n = static_cast<double>(samples.size());
  for (int d = 0; d < kParamDim; ++d) {
    for (std::size_t i = 0; i < samples.size(); ++i) col[i] = samples[i](d);
    // Sorted summation makes the result independent of sample order.
    std::sort(col.begin(), col.end());
    double sum = 0.0;
    for (double v : col) sum += v;
    const double mean = sum / n;
    for (double& v : col) v = (v - mean) * (v - mean);
    std::sort(col.begin(), col.end());
    double ss = 0.0;
    for (double v : col) ss += v;
    st.mean(d) = mean;
    st.std(d) = std::max(std::sqrt(ss / n), kStdFloor);
  }
  return st;
}

}  // namespace inbed
