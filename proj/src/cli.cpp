#include "inbed/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "inbed/archive.hpp"
#include "inbed/plot.hpp"

namespace inbed {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- parsing

RunConfig parse_args(int argc, const char* const* argv, std::ostream& out) {
  CLI::App app{"In-bed body mesh recovery from overhead depth with conditional diffusion"};
  app.name("inbed");
  app.require_subcommand(1, 1);
  app.footer("\n" + schema_help() + "\nThe output root defaults to run.output_dir; " + kOutputRootEnv +
             " overrides it and --out overrides both.");

  RunConfig rc;
  double fraction = -1.0;
  std::int64_t seed = 0;
  std::vector<std::string> set_flags;
  auto common = [&](CLI::App* sc) {
    sc->add_option("-c,--config", rc.config_path, "configuration file")->check(CLI::ExistingFile);
    sc->add_option("--set", set_flags, "override section.key=value (repeatable)");
    sc->add_option("-o,--out", rc.output_dir, "output root");
    sc->add_option("--seed", seed, "shadows run.seed");
    sc->add_option("overrides", rc.overrides, "further section.key=value overrides");
  };
  struct Cmd {
    const char* name;
    const char* help;
  };
  const Cmd cmds[] = {{"gen-data", "generate synthetic and pseudo-real datasets"},
                      {"train", "synthetic-stage training at a fixed learning rate"},
                      {"finetune", "pseudo-real fine-tuning with a linearly decaying learning rate"},
                      {"eval", "evaluate a checkpoint (MPJPE/PVE overall and per cover condition)"},
                      {"infer", "reconstruct one sample of a dataset"},
                      {"s2r-exp", "sim-to-real experiment over seeds and real-data fractions"},
                      {"plot", "render an experiment table as an SVG chart"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : cmds) {
    CLI::App* sc = app.add_subcommand(c.name, c.help);
    common(sc);
    subs[c.name] = sc;
  }
  subs["train"]->add_option("--data", rc.data, "synthetic dataset (default <out>/data/synthetic.ds)");
  subs["train"]->add_option("--resume", rc.resume, "continue a partially trained checkpoint");
  subs["train"]->add_option("--stop-at", rc.stop_at, "stop after this step, leaving a resumable checkpoint");
  subs["finetune"]->add_option("--data", rc.data, "pseudo-real training set (default <out>/data/real_train.ds)");
  subs["finetune"]->add_option("--init", rc.checkpoint, "synthetic-stage checkpoint (default <out>/checkpoints/synthetic.ckpt)");
  subs["finetune"]->add_option("--resume", rc.resume, "continue a partially fine-tuned checkpoint");
  subs["finetune"]->add_option("--fraction", fraction, "fraction of the training set (shadows finetune.fraction)");
  subs["finetune"]->add_flag("--scratch", rc.scratch, "train from random weights (ablation)");
  subs["finetune"]->add_option("--stop-at", rc.stop_at, "stop after this step, leaving a resumable checkpoint");
  subs["eval"]->add_option("--data", rc.data, "labelled dataset (default <out>/data/real_test.ds)");
  subs["eval"]->add_option("--checkpoint", rc.checkpoint, "checkpoint (default <out>/checkpoints/finetune.ckpt)");
  subs["infer"]->add_option("--data", rc.data, "dataset holding the depth image (default <out>/data/real_test.ds)");
  subs["infer"]->add_option("--checkpoint", rc.checkpoint, "checkpoint (default <out>/checkpoints/finetune.ckpt)");
  subs["infer"]->add_option("--index", rc.index, "sample index")->check(CLI::NonNegativeNumber);
  subs["plot"]->add_option("--table", rc.table, "experiment table (default <out>/experiment/table.tsv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    throw UsageError("", kExitOk);
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    throw UsageError("", kExitOk);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what(), kExitConfig);
  }
  rc.overrides.insert(rc.overrides.end(), set_flags.begin(), set_flags.end());
  for (const auto& [name, sc] : subs)
    if (sc->parsed()) {
      rc.command = name;
      if (sc->count("--seed")) rc.seed = seed;
      if (const CLI::Option* f = sc->get_option_no_throw("--fraction"); f && f->count()) rc.fraction = fraction;
    }
  return rc;
}

// ---------------------------------------------------------------- configuration

Config resolve_config(const RunConfig& rc) {
  Config c;
  if (!rc.config_path.empty()) c.merge_file(rc.config_path);
  for (const auto& o : rc.overrides) c.apply_override(o);
  if (rc.seed) c.set("run.seed", std::to_string(*rc.seed), "--seed");
  if (rc.fraction) {
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s.precision(17);
    s << *rc.fraction;
    c.set("finetune.fraction", s.str(), "--fraction");
  }
  return c;
}

fs::path output_root(const RunConfig& rc, const Config& cfg) {
  if (!rc.output_dir.empty()) return rc.output_dir;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return cfg.get_string("run.output_dir");
}

SceneConfig scene_from(const Config& c) {
  SceneConfig s;
  s.camera_height = c.get_real("scene.camera_height");
  s.bed_surface_height = c.get_real("scene.bed_surface_height");
  s.bed_length = c.get_real("scene.bed_length");
  s.bed_width = c.get_real("scene.bed_width");
  s.pixel_pitch = c.get_real("scene.pixel_pitch");
  s.image_height = static_cast<int>(c.get_int("scene.image_height"));
  s.image_width = static_cast<int>(c.get_int("scene.image_width"));
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  return s;
}

TemplateSource templates_from(const Config& c) {
  TemplateSource t;
  t.kind = c.get_string("body.template");
  t.n_vertices = static_cast<int>(c.get_int("body.n_vertices"));
  t.seed = static_cast<std::uint64_t>(c.get_int("body.seed"));
  t.path = c.get_string("body.path");
  if (t.kind != "toy" && t.kind != "file") throw ConfigError("body.template must be toy or file");
  if (t.kind == "toy" && t.n_vertices < kNumJoints) throw ConfigError("body.n_vertices must be at least 24");
  return t;
}

DenoiserConfig model_from(const Config& c) {
  const SceneConfig s = scene_from(c);
  DenoiserConfig m;
  m.depth_height = s.image_height;
  m.depth_width = s.image_width;
  m.n_down_blocks = static_cast<int>(c.get_int("model.n_down_blocks"));
  m.n_attention_blocks = static_cast<int>(c.get_int("model.n_attention_blocks"));
  m.base_channels = static_cast<int>(c.get_int("model.base_channels"));
  m.latent_dim = static_cast<int>(c.get_int("model.latent_dim"));
  m.regressor_hidden = static_cast<int>(c.get_int("model.regressor_hidden"));
  m.include_gender_in_condition = c.get_bool("model.include_gender");
  m.reference_depth = s.bed_depth();
  m.depth_scale = c.get_real("model.depth_scale");
  m.validate();
  return m;
}

namespace {

AugmentPolicy augment_from(const Config& c) {
  AugmentPolicy a;
  a.p_rotate = c.get_real("augment.p_rotate");
  a.max_rotate_deg = c.get_real("augment.max_rotate_deg");
  a.p_erase = c.get_real("augment.p_erase");
  a.max_erase_fraction = c.get_real("augment.max_erase_fraction");
  a.p_noise = c.get_real("augment.p_noise");
  a.max_noise_std = c.get_real("augment.max_noise_std");
  a.rotate_labels = c.get_bool("augment.rotate_labels");
  return a;
}

TrainConfig base_train(const Config& c) {
  TrainConfig t;
  t.T = static_cast<int>(c.get_int("diffusion.T"));
  t.beta_start = c.get_real("diffusion.beta_start");
  t.beta_end = c.get_real("diffusion.beta_end");
  t.lr_init = c.get_real("train.lr_init");
  t.weight_decay = c.get_real("train.weight_decay");
  t.batch_size = static_cast<int>(c.get_int("train.batch_size"));
  t.steps_total = static_cast<int>(c.get_int("train.steps_total"));
  t.lambda_v2v = c.get_real("train.lambda_v2v");
  t.adam_beta1 = c.get_real("train.adam_beta1");
  t.adam_beta2 = c.get_real("train.adam_beta2");
  t.adam_eps = c.get_real("train.adam_eps");
  t.seed = static_cast<std::uint64_t>(c.get_int("run.seed"));
  t.augment = augment_from(c);
  make_schedule(t.T, t.beta_start, t.beta_end);  // validates the range
  t.validate();
  return t;
}

}  // namespace

TrainConfig synthetic_from(const Config& c) {
  TrainConfig t = base_train(c);
  t.stage = Stage::synthetic;
  return t;
}

TrainConfig finetune_from(const Config& c) {
  TrainConfig t = base_train(c);
  t.stage = Stage::finetune;
  t.lr_init = c.get_real("finetune.lr_init");
  t.weight_decay = c.get_real("finetune.weight_decay");
  t.batch_size = static_cast<int>(c.get_int("finetune.batch_size"));
  t.epochs = static_cast<int>(c.get_int("finetune.epochs"));
  t.validate();
  return t;
}

TrainConfig scratch_from(const Config& c) {
  TrainConfig t = finetune_from(c);
  t.from_scratch = true;
  t.lr_init = c.get_real("scratch.lr_init");
  t.epochs = static_cast<int>(c.get_int("scratch.epochs"));
  t.validate();
  return t;
}

GenerationConfig generation_from(const Config& c, const std::string& split) {
  GenerationConfig g;
  g.scene = scene_from(c);
  g.ranges = SampleRanges::defaults();
  const double br = c.get_real("data.beta_range");
  g.ranges.beta_min = -br;
  g.ranges.beta_max = br;
  g.ranges.lateral_probability = c.get_real("data.lateral_probability");
  g.shift.noise_std = c.get_real("shift.noise_std");
  g.shift.blur = c.get_real("shift.blur");
  g.shift.sag = c.get_real("shift.sag");
  g.shift.scale = c.get_real("shift.scale");
  g.shift.bias = 0.0;
  g.bias_max = c.get_real("shift.bias_max");
  const auto base = static_cast<std::uint64_t>(c.get_int("run.seed")) * 4;
  const int n_train_p = static_cast<int>(c.get_int("data.n_train_participants"));
  if (split == "synthetic") {
    g.n_samples = static_cast<int>(c.get_int("data.n_synthetic"));
    g.seed = base + 1;
    g.domain = Domain::synthetic;
  } else if (split == "real_train") {
    g.n_samples = static_cast<int>(c.get_int("data.n_real_train"));
    g.seed = base + 2;
    g.domain = Domain::pseudo_real;
    g.first_participant = 0;
    g.n_participants = n_train_p;
  } else if (split == "real_test") {
    g.n_samples = static_cast<int>(c.get_int("data.n_real_test"));
    g.seed = base + 3;
    g.domain = Domain::pseudo_real;
    g.first_participant = n_train_p;
    g.n_participants = static_cast<int>(c.get_int("data.n_test_participants"));
  } else {
    throw ConfigError("unknown dataset split '" + split + "'");
  }
  if (g.n_samples < 0 || g.n_participants < 1) throw ConfigError("sample and participant counts must be positive");
  return g;
}

S2RConfig experiment_from(const Config& c) {
  S2RConfig e;
  e.seeds.clear();
  for (auto s : c.get_int_list("experiment.seeds")) e.seeds.push_back(static_cast<std::uint64_t>(s));
  e.fractions = c.get_real_list("experiment.fractions");
  for (double f : e.fractions)
    if (!(f >= 0 && f <= 1)) throw ConfigError("experiment.fractions must lie in [0, 1]");
  if (e.seeds.empty() || e.fractions.empty()) throw ConfigError("experiment needs at least one seed and fraction");
  e.model = model_from(c);
  e.synthetic = synthetic_from(c);
  e.finetune = finetune_from(c);
  e.scratch = scratch_from(c);
  e.eval_steps = static_cast<int>(c.get_int("eval.ddim_steps"));
  e.eval_seed = static_cast<std::uint64_t>(c.get_int("eval.seed"));
  return e;
}

nlohmann::json experiment_summary(const S2RResult& res) {
  std::vector<double> fr;
  for (const auto& r : res.rows)
    if (std::find(fr.begin(), fr.end(), r.fraction) == fr.end()) fr.push_back(r.fraction);
  std::sort(fr.begin(), fr.end());
  nlohmann::json medians = nlohmann::json::array();
  bool a = true, b = true, c = true;
  double prev = std::nan("");
  for (double f : fr) {
    const double sim = res.median_mpjpe("sim_only", f), ft = res.median_mpjpe("sim_finetune", f),
                 sc = res.median_mpjpe("scratch", f);
    medians.push_back({{"fraction", f}, {"sim_only", sim}, {"sim_finetune", ft}, {"scratch", sc}});
    if (f >= 0.1 - 1e-12 && !(ft < sim)) a = false;
    if (f > 0 && f <= 0.25 + 1e-12 && !(ft < sc)) b = false;
    if (std::isfinite(prev) && !(ft <= 1.05 * prev)) c = false;
    prev = ft;
  }
  std::vector<double> c2, c0;
  for (const auto& r : res.rows)
    if (r.variant == "sim_finetune" && std::abs(r.fraction - 1.0) < 1e-12) {
      if (r.report.per_cover.count(Cover::cover2)) c2.push_back(r.report.per_cover.at(Cover::cover2).mpjpe_mm);
      if (r.report.per_cover.count(Cover::uncover)) c0.push_back(r.report.per_cover.at(Cover::uncover).mpjpe_mm);
    }
  auto med = [](std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  const double ratio = med(c2) / med(c0);
  nlohmann::json j = {{"medians", medians},
                      {"finetune_beats_sim_only", a},
                      {"finetune_beats_scratch_low_fraction", b},
                      {"finetune_non_increasing", c}};
  if (std::isfinite(ratio)) j["cover2_over_uncover_at_full_data"] = ratio;
  return j;
}

// ---------------------------------------------------------------- commands

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw io::IoError("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw io::IoError("cannot open '" + p.string() + "' for writing");
  f << text;
  if (!f) throw io::IoError("write failed for '" + p.string() + "'");
}

class Session {
 public:
  Session(const RunConfig& rc, std::ostream& out) : rc_(rc), out_(out), cfg_(resolve_config(rc)), root_(output_root(rc, cfg_)) {}

  const Config& cfg() const { return cfg_; }
  const fs::path& root() const { return root_; }
  std::ostream& out() { return out_; }

  fs::path path_or(const std::string& given, const fs::path& fallback) const {
    return given.empty() ? root_ / fallback : fs::path(given);
  }

  void artifact(const fs::path& p) { artifacts_.push_back(p); }

  void write_manifest() {
    nlohmann::json arts = nlohmann::json::object();
    for (const auto& p : artifacts_) {
      const std::string bytes = read_text(p);
      arts[fs::relative(p, root_).generic_string()] = io::hex64(io::fnv1a(bytes));
    }
    const nlohmann::json m = {{"command", rc_.command},
                              {"config_digest", cfg_.digest()},
                              {"seeds",
                               {{"run", cfg_.get_int("run.seed")},
                                {"eval", cfg_.get_int("eval.seed")},
                                {"experiment", cfg_.get_int_list("experiment.seeds")}}},
                              {"config", cfg_.to_json()},
                              {"artifacts", arts}};
    write_text(root_ / ("manifest_" + rc_.command + ".json"), m.dump(2) + "\n");
  }

  const TemplateSet& templates() {
    if (!templates_) templates_ = templates_from(cfg_).load();
    return *templates_;
  }

 private:
  const RunConfig& rc_;
  std::ostream& out_;
  Config cfg_;
  fs::path root_;
  std::vector<fs::path> artifacts_;
  std::optional<TemplateSet> templates_;
};

Dataset load_or_generate(Session& s, const std::string& split, bool write) {
  const fs::path p = s.root() / "data" / (split + ".ds");
  if (fs::exists(p)) return read_dataset(p);
  Dataset d = generate_dataset(generation_from(s.cfg(), split), s.templates());
  if (write) {
    write_dataset(p, d);
    s.artifact(p);
  }
  return d;
}

void cmd_gen_data(Session& s) {
  for (const char* split : {"synthetic", "real_train", "real_test"}) {
    const GenerationConfig g = generation_from(s.cfg(), split);
    const Dataset d = generate_dataset(g, s.templates());
    const fs::path p = s.root() / "data" / (std::string(split) + ".ds");
    write_dataset(p, d);
    s.artifact(p);
    s.out() << "wrote " << p.string() << " (" << d.samples.size() << " samples)\n";
  }
}

Dataset subset(const Dataset& d, double fraction) {
  Dataset out = d;
  out.samples.resize(static_cast<std::size_t>(fraction_count(fraction, static_cast<int>(d.samples.size()))));
  return out;
}

void cmd_train(Session& s, const RunConfig& rc) {
  const fs::path data_path = s.path_or(rc.data, "data/synthetic.ds");
  const Dataset data = read_dataset(data_path);
  const TrainConfig tc = synthetic_from(s.cfg());
  StageOptions opt;
  std::optional<Checkpoint> resume;
  if (!rc.resume.empty()) {
    resume = load_checkpoint(rc.resume);
    opt.init = &*resume;
  }
  opt.stop_at_step = rc.stop_at;
  const fs::path log_path = s.root() / "logs" / "train.ndjson";
  fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  opt.log = &log;
  const Checkpoint ck = run_stage(data, tc, model_from(s.cfg()), templates_from(s.cfg()), s.templates(), opt);
  const fs::path out = s.root() / "checkpoints" / "synthetic.ckpt";
  save_checkpoint(out, ck);
  s.artifact(out);
  s.out() << "synthetic stage: step " << ck.step << "/" << ck.steps_total << ", wrote " << out.string() << "\n";
}

void cmd_finetune(Session& s, const RunConfig& rc) {
  const Dataset full = read_dataset(s.path_or(rc.data, "data/real_train.ds"));
  const Dataset data = subset(full, s.cfg().get_real("finetune.fraction"));
  TrainConfig tc = rc.scratch ? scratch_from(s.cfg()) : finetune_from(s.cfg());
  StageOptions opt;
  std::optional<Checkpoint> init;
  if (!rc.resume.empty()) {
    init = load_checkpoint(rc.resume);
    opt.init = &*init;
  } else if (!rc.scratch) {
    init = load_checkpoint(s.path_or(rc.checkpoint, "checkpoints/synthetic.ckpt"));
    opt.init = &*init;
  } else {
    // Scratch models still standardise with synthetic-set statistics.
    const fs::path syn = s.root() / "data" / "synthetic.ds";
    if (fs::exists(syn)) opt.stats = compute_norm_stats(read_dataset(syn).samples, s.templates());
  }
  opt.stop_at_step = rc.stop_at;
  const std::string name = rc.scratch ? "scratch" : "finetune";
  const fs::path log_path = s.root() / "logs" / (name + ".ndjson");
  fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, rc.resume.empty() ? std::ios::trunc : std::ios::app);
  opt.log = &log;
  const Checkpoint ck = run_stage(data, tc, model_from(s.cfg()), templates_from(s.cfg()), s.templates(), opt);
  const fs::path out = s.root() / "checkpoints" / (name + ".ckpt");
  save_checkpoint(out, ck);
  s.artifact(out);
  s.out() << name << " stage on " << data.samples.size() << " samples: step " << ck.step << "/" << ck.steps_total
          << ", wrote " << out.string() << "\n";
}

void cmd_eval(Session& s, const RunConfig& rc) {
  const fs::path ck_path = s.path_or(rc.checkpoint, "checkpoints/finetune.ckpt");
  const Checkpoint ck = load_checkpoint(ck_path);
  const Dataset data = read_dataset(s.path_or(rc.data, "data/real_test.ds"));
  const EvalReport rep = evaluate(data, ck, s.templates(), static_cast<int>(s.cfg().get_int("eval.ddim_steps")),
                                  static_cast<std::uint64_t>(s.cfg().get_int("eval.seed")));
  const fs::path out = s.root() / "reports" / ("eval_" + ck_path.stem().string() + ".json");
  write_text(out, rep.to_json().dump(2) + "\n");
  s.artifact(out);
  s.out() << "MPJPE " << rep.mpjpe_mm << " mm, PVE " << rep.pve_mm << " mm over " << rep.n_samples
          << " samples; wrote " << out.string() << "\n";
}

void cmd_infer(Session& s, const RunConfig& rc) {
  const Checkpoint ck = load_checkpoint(s.path_or(rc.checkpoint, "checkpoints/finetune.ckpt"));
  const Dataset data = read_dataset(s.path_or(rc.data, "data/real_test.ds"));
  if (rc.index < 0 || rc.index >= static_cast<int>(data.samples.size()))
    throw ConfigError("--index " + std::to_string(rc.index) + " outside the dataset (" +
                      std::to_string(data.samples.size()) + " samples)");
  const Sample& smp = data.samples[static_cast<std::size_t>(rc.index)];
  const Denoiser net = make_denoiser(ck);
  const Inference inf = infer(smp.depth, smp.gender, ck, net, s.templates(),
                              static_cast<int>(s.cfg().get_int("eval.ddim_steps")),
                              eval_item_seed(static_cast<std::uint64_t>(s.cfg().get_int("eval.seed")), rc.index));
  const BodyMesh gt = forward(unpack(smp.params), smp.gender, s.templates());
  nlohmann::json j;
  j["index"] = rc.index;
  j["gender"] = gender_name(smp.gender);
  j["params"] = std::vector<double>(inf.params.data(), inf.params.data() + kParamDim);
  j["joints"] = std::vector<double>(inf.mesh.joints.data(), inf.mesh.joints.data() + inf.mesh.joints.size());
  j["mpjpe_mm"] = mpjpe_mm(inf.mesh.joints, gt.joints);
  j["pve_mm"] = pve_mm(inf.mesh.vertices, gt.vertices);
  const fs::path jp = s.root() / "infer" / ("sample_" + std::to_string(rc.index) + ".json");
  write_text(jp, j.dump(2) + "\n");
  std::ostringstream obj;
  obj.precision(6);
  obj << std::fixed;
  for (Eigen::Index i = 0; i < inf.mesh.vertices.rows(); ++i)
    obj << "v " << inf.mesh.vertices(i, 0) << ' ' << inf.mesh.vertices(i, 1) << ' ' << inf.mesh.vertices(i, 2) << '\n';
  const auto& F = s.templates().get(smp.gender).faces;
  for (Eigen::Index f = 0; f < F.rows(); ++f) obj << "f " << F(f, 0) + 1 << ' ' << F(f, 1) + 1 << ' ' << F(f, 2) + 1 << '\n';
  const fs::path op = s.root() / "infer" / ("sample_" + std::to_string(rc.index) + ".obj");
  write_text(op, obj.str());
  s.artifact(jp);
  s.artifact(op);
  s.out() << "sample " << rc.index << ": MPJPE " << j["mpjpe_mm"].get<double>() << " mm; wrote " << jp.string()
          << " and " << op.string() << "\n";
}

std::string plot_triples(const S2RResult& res) {
  std::ostringstream o;
  o << "variant\tfraction_percent\tseed\tmpjpe_mm\n";
  for (const auto& r : res.rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4f\t%llu\t%.4f", 100.0 * r.fraction, static_cast<unsigned long long>(r.seed),
                  r.report.mpjpe_mm);
    o << r.variant << '\t' << buf << '\n';
  }
  return o.str();
}

void cmd_s2r(Session& s) {
  const Dataset syn = load_or_generate(s, "synthetic", true);
  const Dataset rtr = load_or_generate(s, "real_train", true);
  const Dataset rte = load_or_generate(s, "real_test", true);
  const S2RConfig ec = experiment_from(s.cfg());
  const S2RResult res = s2r_experiment(syn, rtr, rte, ec, templates_from(s.cfg()), s.templates(),
                                       [&](const std::string& m) { s.out() << m << std::endl; });
  const fs::path dir = s.root() / "experiment";
  write_text(dir / "table.tsv", res.table_tsv());
  write_text(dir / "plot_data.tsv", plot_triples(res));
  write_text(dir / "summary.json", experiment_summary(res).dump(2) + "\n");
  write_text(dir / "mpjpe.svg", render_svg(s2r_series(res)));
  for (const char* f : {"table.tsv", "plot_data.tsv", "summary.json", "mpjpe.svg"}) s.artifact(dir / f);
  s.out() << experiment_summary(res).dump(2) << "\n";
}

void cmd_plot(Session& s, const RunConfig& rc) {
  const fs::path tp = s.path_or(rc.table, "experiment/table.tsv");
  const std::vector<TableRow> rows = parse_table(read_text(tp));
  if (rows.empty()) throw ConfigError("table '" + tp.string() + "' has no rows");
  const fs::path out = s.root() / "plots" / (tp.stem().string() + "_mpjpe.svg");
  write_text(out, render_svg(table_series(rows)));
  s.artifact(out);
  s.out() << "wrote " << out.string() << "\n";
}

}  // namespace

int run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  try {
    Session s(rc, out);
    if (rc.command == "gen-data") cmd_gen_data(s);
    else if (rc.command == "train") cmd_train(s, rc);
    else if (rc.command == "finetune") cmd_finetune(s, rc);
    else if (rc.command == "eval") cmd_eval(s, rc);
    else if (rc.command == "infer") cmd_infer(s, rc);
    else if (rc.command == "s2r-exp") cmd_s2r(s);
    else if (rc.command == "plot") cmd_plot(s, rc);
    else throw ConfigError("unknown command '" + rc.command + "'");
    s.write_manifest();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ScheduleError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const io::IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const io::FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  try {
    rc = parse_args(argc, argv, out);
  } catch (const UsageError& e) {
    if (e.code() != kExitOk) err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return e.code();
  }
  return run(rc, out, err);
}

}  // namespace inbed
