#pragma once

// Metrics, DDIM inference, dataset evaluation and the sim-to-real experiment.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "inbed/data.hpp"
#include "inbed/network.hpp"
#include "inbed/train.hpp"

namespace inbed {

// Mean Euclidean joint / vertex error in millimetres (no alignment).
double mpjpe_mm(const Joints& pred, const Joints& gt);
double pve_mm(const Vertices& pred, const Vertices& gt);

struct Inference {
  ParamVector params = ParamVector::Zero();
  BodyMesh mesh;
};

// Deterministic DDIM draw from the checkpoint's denoiser, destandardised and
// decoded through the body model.
Inference infer(const DepthImage& depth, Gender gender, const Checkpoint& ck, const Denoiser& net,
                const TemplateSet& templates, int n_steps, std::uint64_t seed);

// Seed used for dataset item `index` under evaluation seed `seed`.
std::uint64_t eval_item_seed(std::uint64_t seed, int index);

struct CoverMetrics {
  double mpjpe_mm = 0.0;
  double pve_mm = 0.0;
  int n = 0;
};

struct EvalReport {
  double mpjpe_mm = 0.0;
  double pve_mm = 0.0;
  std::map<Cover, CoverMetrics> per_cover;
  int n_samples = 0;
  std::string config_digest;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const Dataset& data, const Checkpoint& ck, const TemplateSet& templates, int n_steps = 5,
                    std::uint64_t seed = 0);

struct S2RConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<double> fractions = {0.1, 0.25, 0.5, 1.0};
  DenoiserConfig model;
  TrainConfig synthetic;  // stage = synthetic
  TrainConfig finetune;   // stage = finetune
  TrainConfig scratch;    // stage = finetune, from_scratch
  int eval_steps = 5;
  std::uint64_t eval_seed = 0;
};

struct S2RRow {
  std::string variant;  // "sim_only", "sim_finetune", "scratch"
  double fraction = 0.0;
  std::uint64_t seed = 0;
  EvalReport report;
};

struct S2RResult {
  std::vector<S2RRow> rows;

  // Tab-separated: variant, fraction, seed, mpjpe_mm, pve_mm, then per-cover MPJPE.
  std::string table_tsv() const;
  // Median over seeds of the MPJPE of one variant at one fraction.
  double median_mpjpe(const std::string& variant, double fraction) const;
};

// Number of real training samples used at fraction f of n.
int fraction_count(double f, int n);

using ProgressFn = std::function<void(const std::string& message)>;

// For every seed: pretrain on the synthetic set, evaluate it on the
// pseudo-real test set, then per fraction fine-tune from it and train a
// scratch model on the first f*N pseudo-real training samples.
S2RResult s2r_experiment(const Dataset& synthetic, const Dataset& real_train, const Dataset& real_test,
                         const S2RConfig& cfg, const TemplateSource& source, const TemplateSet& templates,
                         const ProgressFn& progress = {});

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), sorted by x
};

// Per-variant median MPJPE against the real-data fraction in percent.
std::vector<PlotSeries> s2r_series(const S2RResult& res);

// Parses a table written by table_tsv back into (variant, fraction, seed, mpjpe, pve) rows.
struct TableRow {
  std::string variant;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  double mpjpe_mm = 0.0;
  double pve_mm = 0.0;
};
std::vector<TableRow> parse_table(const std::string& tsv);
std::vector<PlotSeries> table_series(const std::vector<TableRow>& rows);

}  // namespace inbed
