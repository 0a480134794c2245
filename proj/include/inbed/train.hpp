#pragma once

// Two-stage training: synthetic pretraining at a fixed learning rate, then
// fine-tuning on pseudo-real data with a linearly decaying rate. Optimizer is
// Adam with decoupled weight decay. Every step is a pure function of
// (seed, step, weights, optimizer state, dataset), so runs resume exactly.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "inbed/data.hpp"
#include "inbed/diffusion.hpp"
#include "inbed/losses.hpp"
#include "inbed/network.hpp"

namespace inbed {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage : std::uint8_t { synthetic = 0, finetune = 1 };
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// Where the body templates come from: the procedural toy body or a template file.
struct TemplateSource {
  std::string kind = "toy";  // "toy" or "file"
  int n_vertices = 240;
  std::uint64_t seed = 0;
  std::string path;

  TemplateSet load() const;
  nlohmann::json to_json() const;
  static TemplateSource from_json(const nlohmann::json& j);
  bool operator==(const TemplateSource&) const = default;
};

struct TrainConfig {
  Stage stage = Stage::synthetic;
  double lr_init = 1e-4;
  double weight_decay = 5e-4;
  int batch_size = 32;
  int T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.2;
  int steps_total = 20000;  // synthetic stage
  int epochs = 50;          // fine-tune stage: steps_total = ceil(N / batch) * epochs
  std::uint64_t seed = 0;
  double lambda_v2v = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool from_scratch = false;  // fine-tune stage without a pretrained checkpoint (ablation)
  AugmentPolicy augment;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Synthetic stage: lr_init. Fine-tune stage: (1 - step / (steps_total + 1)) * lr_init.
// Throws std::out_of_range unless 0 <= step <= steps_total.
double lr_at(int step, Stage stage, int steps_total, double lr_init);

int finetune_steps(int n_samples, int batch_size, int epochs);

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;

  void reset(std::size_t n);
};

// w <- w - lr * wd * w, then the bias-corrected Adam update.
void adamw_update(std::vector<double>& w, const std::vector<double>& g, AdamState& st, double lr, double wd,
                  double beta1, double beta2, double eps);

struct Checkpoint {
  static constexpr int kVersion = 1;
  DenoiserConfig model;
  std::vector<double> weights;
  AdamState adam;
  NormStats stats;
  DiffusionSchedule schedule;
  TrainConfig train;
  SceneConfig scene;
  TemplateSource templates;
  int step = 0;
  int steps_total = 0;

  bool finished() const { return step >= steps_total; }
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Denoiser make_denoiser(const Checkpoint& ck);

struct TrainContext {
  const TemplateSet* templates = nullptr;
  const DiffusionSchedule* schedule = nullptr;
  const NormStats* stats = nullptr;
  LossWeights weights;
  SceneConfig scene;
  TrainConfig cfg;
};

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
};

// One optimizer step on a batch: per item, standardise the ground truth,
// draw t uniformly from {0..T-1}, noise it, denoise, decode both parameter
// vectors and average the total loss. Throws NumericError on a non-finite loss.
StepResult train_step(Denoiser& model, AdamState& adam, const std::vector<const Sample*>& batch,
                      const TrainContext& ctx, int step, int steps_total);

// Sample indices of the batch used at `step`: epochs walk a seeded permutation.
std::vector<int> batch_indices(int n_samples, int batch_size, std::uint64_t seed, int step);

struct StageOptions {
  const Checkpoint* init = nullptr;  // pretrained weights, or a partial run of the same stage to resume
  std::optional<NormStats> stats;    // frozen statistics (default: from init, else from the data)
  std::ostream* log = nullptr;       // newline-delimited {step, lr, loss, wall_time}
  int stop_at_step = -1;             // stop early, leaving a resumable checkpoint
  int eval_every = 0;
  std::function<void(int step, const Denoiser&)> on_eval;
};

Checkpoint run_stage(const Dataset& data, const TrainConfig& cfg, const DenoiserConfig& model_cfg,
                     const TemplateSource& source, const TemplateSet& templates, const StageOptions& opt = {});

}  // namespace inbed
