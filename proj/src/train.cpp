#include "inbed/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "inbed/archive.hpp"

namespace inbed {

const char* stage_name(Stage s) { return s == Stage::synthetic ? "synthetic" : "finetune"; }

Stage stage_from_name(const std::string& name) {
  if (name == "synthetic") return Stage::synthetic;
  if (name == "finetune") return Stage::finetune;
  throw ConfigError("unknown stage '" + name + "'");
}

// ---------------------------------------------------------------- config

TemplateSet TemplateSource::load() const {
  if (kind == "toy") return make_toy_template(n_vertices, seed);
  if (kind == "file") return read_templates(io::Archive::load(path));
  throw ConfigError("unknown template kind '" + kind + "'");
}

nlohmann::json TemplateSource::to_json() const {
  return {{"kind", kind}, {"n_vertices", n_vertices}, {"seed", seed}, {"path", path}};
}

TemplateSource TemplateSource::from_json(const nlohmann::json& j) {
  TemplateSource s;
  s.kind = j.at("kind").get<std::string>();
  s.n_vertices = j.at("n_vertices").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.path = j.at("path").get<std::string>();
  return s;
}

void TrainConfig::validate() const {
  if (!(lr_init >= 0 && std::isfinite(lr_init))) throw ConfigError("lr_init must be nonnegative");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (T < 1) throw ConfigError("T must be positive");
  if (steps_total < 0 || epochs < 0) throw ConfigError("step and epoch counts must be nonnegative");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0))
    throw ConfigError("invalid Adam coefficients");
  if (!(lambda_v2v >= 0)) throw ConfigError("lambda_v2v must be nonnegative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"stage", stage_name(stage)},
          {"lr_init", lr_init},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"T", T},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"steps_total", steps_total},
          {"epochs", epochs},
          {"seed", seed},
          {"lambda_v2v", lambda_v2v},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"from_scratch", from_scratch},
          {"augment", augment.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.stage = stage_from_name(j.at("stage").get<std::string>());
  c.lr_init = j.at("lr_init").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.T = j.at("T").get<int>();
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  c.steps_total = j.at("steps_total").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lambda_v2v = j.at("lambda_v2v").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.from_scratch = j.at("from_scratch").get<bool>();
  c.augment = AugmentPolicy::from_json(j.at("augment"));
  return c;
}

double lr_at(int step, Stage stage, int steps_total, double lr_init) {
  if (step < 0 || step > steps_total)
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " + std::to_string(steps_total) + "]");
  if (stage == Stage::synthetic) return lr_init;
  return (1.0 - static_cast<double>(step) / (steps_total + 1.0)) * lr_init;
}

int finetune_steps(int n_samples, int batch_size, int epochs) {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  return (n_samples + batch_size - 1) / batch_size * epochs;
}

// ---------------------------------------------------------------- optimizer

void AdamState::reset(std::size_t n) {
  m.assign(n, 0.0);
  v.assign(n, 0.0);
  t = 0;
}

void adamw_update(std::vector<double>& w, const std::vector<double>& g, AdamState& st, double lr, double wd,
                  double beta1, double beta2, double eps) {
  if (st.m.size() != w.size()) st.reset(w.size());
  ++st.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
    w[i] -= lr * wd * w[i];
    w[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
  }
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr const char* kCheckpointFormat = "inbed.checkpoint";

std::span<const double> slice(const std::vector<double>& v, const nn::ParamStore::Entry& e) {
  return {v.data() + e.offset, e.size};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const Denoiser net(ck.model);
  const auto& entries = net.params().entries();
  if (ck.weights.size() != net.parameter_count()) throw std::invalid_argument("checkpoint weight count mismatch");
  io::Archive ar;
  io::set_format(ar, kCheckpointFormat, Checkpoint::kVersion);
  auto& m = ar.meta();
  m["model"] = ck.model.to_json();
  m["train"] = ck.train.to_json();
  m["stats"] = ck.stats.to_json();
  m["scene"] = ck.scene.to_json();
  m["templates"] = ck.templates.to_json();
  m["step"] = ck.step;
  m["steps_total"] = ck.steps_total;
  m["adam_t"] = ck.adam.t;
  m["schedule"] = {{"T", ck.schedule.T}};
  const bool has_moments = ck.adam.m.size() == ck.weights.size();
  m["has_moments"] = has_moments;
  for (const auto& e : entries) {
    ar.put_f64("weights." + e.name, e.shape, slice(ck.weights, e));
    if (has_moments) {
      ar.put_f64("adam_m." + e.name, e.shape, slice(ck.adam.m, e));
      ar.put_f64("adam_v." + e.name, e.shape, slice(ck.adam.v, e));
    }
  }
  const std::int64_t T = ck.schedule.T;
  ar.put_f64("schedule.beta", {T}, ck.schedule.beta);
  ar.put_f64("schedule.alpha", {T}, ck.schedule.alpha);
  ar.put_f64("schedule.alpha_bar", {T}, ck.schedule.alpha_bar);
  ar.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const io::Archive ar = io::Archive::load(path);
  io::require_format(ar, kCheckpointFormat, Checkpoint::kVersion);
  Checkpoint ck;
  try {
    const auto& m = ar.meta();
    ck.model = DenoiserConfig::from_json(m.at("model"));
    ck.train = TrainConfig::from_json(m.at("train"));
    ck.stats = NormStats::from_json(m.at("stats"));
    ck.scene = SceneConfig::from_json(m.at("scene"));
    ck.templates = TemplateSource::from_json(m.at("templates"));
    ck.step = m.at("step").get<int>();
    ck.steps_total = m.at("steps_total").get<int>();
    ck.adam.t = m.at("adam_t").get<std::int64_t>();
    ck.schedule.T = m.at("schedule").at("T").get<int>();
    const bool has_moments = m.at("has_moments").get<bool>();

    const Denoiser net(ck.model);
    ck.weights.assign(net.parameter_count(), 0.0);
    if (has_moments) {
      ck.adam.m.assign(net.parameter_count(), 0.0);
      ck.adam.v.assign(net.parameter_count(), 0.0);
    }
    for (const auto& e : net.params().entries()) {
      auto copy = [&](const std::string& prefix, std::vector<double>& dst) {
        const auto v = ar.get_f64(prefix + e.name, e.shape);
        std::copy(v.begin(), v.end(), dst.begin() + static_cast<std::ptrdiff_t>(e.offset));
      };
      copy("weights.", ck.weights);
      if (has_moments) {
        copy("adam_m.", ck.adam.m);
        copy("adam_v.", ck.adam.v);
      }
    }
    const std::int64_t T = ck.schedule.T;
    ck.schedule.beta = ar.get_f64("schedule.beta", {T});
    ck.schedule.alpha = ar.get_f64("schedule.alpha", {T});
    ck.schedule.alpha_bar = ar.get_f64("schedule.alpha_bar", {T});
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  return ck;
}

Denoiser make_denoiser(const Checkpoint& ck) {
  Denoiser net(ck.model);
  if (ck.weights.size() != net.parameter_count()) throw ConfigError("checkpoint weights do not match the model config");
  net.params().values() = ck.weights;
  return net;
}

// ---------------------------------------------------------------- training step

namespace {

std::mt19937_64 step_rng(std::uint64_t seed, int step, Stage stage) {
  std::seed_seq seq{static_cast<unsigned>(seed & 0xffffffffu), static_cast<unsigned>(seed >> 32),
                    static_cast<unsigned>(step), static_cast<unsigned>(stage), 0x74726eU};
  return std::mt19937_64(seq);
}

}  // namespace

StepResult train_step(Denoiser& model, AdamState& adam, const std::vector<const Sample*>& batch,
                      const TrainContext& ctx, int step, int steps_total) {
  const TrainConfig& cfg = ctx.cfg;
  StepResult res;
  res.lr = lr_at(step, cfg.stage, steps_total, cfg.lr_init);
  auto& store = model.params();
  store.zero_grad();
  if (batch.empty()) return res;

  std::mt19937_64 rng = step_rng(cfg.seed, step, cfg.stage);
  std::uniform_int_distribution<int> pick_t(0, ctx.schedule->T - 1);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Denoiser::Workspace ws;
  LossGrad lg;
  double loss_sum = 0.0;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    const Augmented aug = augment(s.depth, rng, cfg.augment, ctx.scene);
    const int t = pick_t(rng);
    const Latent eps = standard_normal(rng);

    Decoded gt;
    gt.params = s.params;
    if (cfg.augment.rotate_labels && aug.rotation != 0.0)
      gt.params = pack(rotate_params_about_vertical(unpack(s.params), aug.rotation, s.gender, *ctx.templates));
    gt.mesh = forward(unpack(gt.params), s.gender, *ctx.templates);

    const Latent x0 = ctx.stats->latent.standardize(gt.params);
    const Latent x_t = q_sample(x0, t, eps, *ctx.schedule);
    const Latent z = model.forward(model.encode_depth(aug.depth), x_t, t, s.gender, &ws);

    Decoded pred;
    pred.params = ctx.stats->latent.destandardize(z);
    PoseTrace trace;
    try {
      pred.mesh = forward(unpack(pred.params), s.gender, *ctx.templates, &trace);
    } catch (const InvalidRotation& e) {
      throw NumericError("step " + std::to_string(step) + ", item " + std::to_string(i) + ": " + e.what());
    }
    const LossParts parts = total_loss_grad(pred, gt, ctx.weights, lg);
    if (!std::isfinite(parts.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (item " << i << ", t=" << t << ", smpl=" << parts.smpl
          << ", v2v=" << parts.v2v << ")";
      throw NumericError(msg.str());
    }
    loss_sum += parts.total;

    const ParamVector g_raw = lg.params + backward(trace, unpack(pred.params), lg.vertices, lg.joints);
    model.backward(ws, g_raw.cwiseProduct(ctx.stats->latent.std) * inv_b);
  }
  res.loss = loss_sum * inv_b;

  for (double g : store.grads())
    if (!std::isfinite(g)) throw NumericError("non-finite gradient at step " + std::to_string(step));
  adamw_update(store.values(), store.grads(), adam, res.lr, cfg.weight_decay, cfg.adam_beta1, cfg.adam_beta2,
               cfg.adam_eps);
  return res;
}

std::vector<int> batch_indices(int n, int batch_size, std::uint64_t seed, int step) {
  if (n <= 0) return {};
  const int per_epoch = (n + batch_size - 1) / batch_size;
  const int epoch = step / per_epoch, pos = step % per_epoch;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::seed_seq seq{static_cast<unsigned>(seed & 0xffffffffu), static_cast<unsigned>(seed >> 32),
                    static_cast<unsigned>(epoch), 0x706572U};
  std::mt19937_64 rng(seq);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  const int begin = pos * batch_size, end = std::min(n, begin + batch_size);
  return {perm.begin() + begin, perm.begin() + end};
}

// ---------------------------------------------------------------- stages

Checkpoint run_stage(const Dataset& data, const TrainConfig& cfg, const DenoiserConfig& model_cfg,
                     const TemplateSource& source, const TemplateSet& templates, const StageOptions& opt) {
  cfg.validate();
  Checkpoint ck;
  const Checkpoint* init = opt.init;
  const bool resume = init && init->train.stage == cfg.stage && !init->finished() && init->step > 0;

  if (resume) {
    ck = *init;
    if (!(ck.model == model_cfg)) throw ConfigError("checkpoint model config differs from the requested one");
    const nlohmann::json a = ck.train.to_json(), b = cfg.to_json();
    if (a != b) throw ConfigError("cannot resume: training config differs from the checkpoint's");
  } else if (init) {
    if (!(cfg.stage == Stage::finetune && init->train.stage == Stage::synthetic))
      throw ConfigError("a " + std::string(stage_name(cfg.stage)) + " stage cannot start from a " +
                        stage_name(init->train.stage) + " checkpoint");
    if (!(init->model == model_cfg)) throw ConfigError("checkpoint model config differs from the requested one");
    ck.model = init->model;
    ck.weights = init->weights;
    ck.stats = init->stats;
    ck.adam.reset(ck.weights.size());
  } else {
    if (cfg.stage == Stage::finetune && !cfg.from_scratch)
      throw ConfigError("fine-tuning needs a synthetic-stage checkpoint (or from_scratch)");
    ck.model = model_cfg;
    Denoiser fresh(model_cfg);
    fresh.init_weights(cfg.seed);
    ck.weights = fresh.params().values();
    ck.adam.reset(ck.weights.size());
    if (!opt.stats && data.samples.empty()) throw std::invalid_argument("cannot compute statistics of an empty dataset");
    ck.stats = opt.stats ? *opt.stats : compute_norm_stats(data.samples, templates);
  }
  if (!resume) {
    if (opt.stats) ck.stats = *opt.stats;
    ck.train = cfg;
    ck.templates = source;
    ck.step = 0;
    ck.steps_total = cfg.stage == Stage::synthetic
                         ? cfg.steps_total
                         : finetune_steps(static_cast<int>(data.samples.size()), cfg.batch_size, cfg.epochs);
    ck.schedule = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
  }
  ck.scene = data.scene;
  if (ck.model.depth_height != data.scene.image_height || ck.model.depth_width != data.scene.image_width)
    throw ConfigError("model input size differs from the dataset image size");
  if (init && !(init->scene == data.scene)) throw ConfigError("checkpoint scene differs from the dataset scene");
  if (!(ck.templates == source)) throw ConfigError("checkpoint body templates differ from the requested ones");

  Denoiser model = make_denoiser(ck);
  TrainContext ctx;
  ctx.templates = &templates;
  ctx.schedule = &ck.schedule;
  ctx.stats = &ck.stats;
  ctx.weights = LossWeights::from_stats(ck.stats, templates.n_vertices(), cfg.lambda_v2v);
  ctx.scene = data.scene;
  ctx.cfg = cfg;

  const int n = static_cast<int>(data.samples.size());
  const auto t0 = std::chrono::steady_clock::now();
  const int stop = opt.stop_at_step >= 0 ? std::min(opt.stop_at_step, ck.steps_total) : ck.steps_total;
  if (n == 0 && stop > ck.step) throw std::invalid_argument("cannot train on an empty dataset");
  std::vector<const Sample*> batch;
  while (ck.step < stop) {
    batch.clear();
    for (int idx : batch_indices(n, cfg.batch_size, cfg.seed, ck.step)) batch.push_back(&data.samples[idx]);
    const StepResult r = train_step(model, ck.adam, batch, ctx, ck.step, ck.steps_total);
    ++ck.step;
    if (opt.log) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *opt.log << nlohmann::json{{"step", ck.step}, {"lr", r.lr}, {"loss", r.loss}, {"wall_time", wall}}.dump()
               << '\n';
    }
    if (opt.on_eval && opt.eval_every > 0 && ck.step % opt.eval_every == 0) opt.on_eval(ck.step, model);
  }
  ck.weights = model.params().values();
  return ck;
}

}  // namespace inbed
