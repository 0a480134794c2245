#include "inbed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "inbed/archive.hpp"

namespace inbed {

double mpjpe_mm(const Joints& pred, const Joints& gt) {
  double s = 0;
  for (int i = 0; i < kNumJoints; ++i) s += (pred.row(i) - gt.row(i)).norm();
  return 1000.0 * s / kNumJoints;
}

double pve_mm(const Vertices& pred, const Vertices& gt) {
  if (pred.rows() != gt.rows() || pred.rows() == 0) throw std::invalid_argument("vertex count mismatch in PVE");
  double s = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) s += (pred.row(i) - gt.row(i)).norm();
  return 1000.0 * s / static_cast<double>(pred.rows());
}

Inference infer(const DepthImage& depth, Gender gender, const Checkpoint& ck, const Denoiser& net,
                const TemplateSet& templates, int n_steps, std::uint64_t seed) {
  if (depth.height != ck.model.depth_height || depth.width != ck.model.depth_width)
    throw ConfigError("depth image is " + std::to_string(depth.height) + "x" + std::to_string(depth.width) +
                      " but the checkpoint expects " + std::to_string(ck.model.depth_height) + "x" +
                      std::to_string(ck.model.depth_width));
  const nn::Tensor image = net.encode_depth(depth);
  const DenoiseFn fn = [&](const Latent& x_t, int t) { return net.forward(image, x_t, t, gender); };
  const Latent z = ddim_sample(fn, n_steps, ck.schedule, seed);
  Inference out;
  out.params = ck.stats.latent.destandardize(z);
  out.mesh = forward(unpack(out.params), gender, templates);
  return out;
}

std::uint64_t eval_item_seed(std::uint64_t seed, int index) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json pc = nlohmann::json::object();
  for (const auto& [c, m] : per_cover) pc[cover_name(c)] = {{"mpjpe_mm", m.mpjpe_mm}, {"pve_mm", m.pve_mm}, {"n", m.n}};
  return {{"mpjpe_mm", mpjpe_mm}, {"pve_mm", pve_mm}, {"n_samples", n_samples}, {"per_cover", pc},
          {"config_digest", config_digest}};
}

EvalReport evaluate(const Dataset& data, const Checkpoint& ck, const TemplateSet& templates, int n_steps,
                    std::uint64_t seed) {
  if (data.samples.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  const Denoiser net = make_denoiser(ck);
  EvalReport rep;
  std::map<Cover, std::pair<double, double>> sums;
  double sj = 0, sv = 0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    const Inference inf = infer(s.depth, s.gender, ck, net, templates, n_steps, eval_item_seed(seed, static_cast<int>(i)));
    const BodyMesh gt = forward(unpack(s.params), s.gender, templates);
    const double j = mpjpe_mm(inf.mesh.joints, gt.joints), v = pve_mm(inf.mesh.vertices, gt.vertices);
    sj += j;
    sv += v;
    sums[s.cover].first += j;
    sums[s.cover].second += v;
    rep.per_cover[s.cover].n += 1;
  }
  rep.n_samples = static_cast<int>(data.samples.size());
  rep.mpjpe_mm = sj / rep.n_samples;
  rep.pve_mm = sv / rep.n_samples;
  for (auto& [c, m] : rep.per_cover) {
    m.mpjpe_mm = sums[c].first / m.n;
    m.pve_mm = sums[c].second / m.n;
  }
  const auto wbytes = std::as_bytes(std::span<const double>(ck.weights));
  const nlohmann::json digest_src = {{"model", ck.model.to_json()},
                                     {"train", ck.train.to_json()},
                                     {"step", ck.step},
                                     {"weights", io::hex64(io::fnv1a(wbytes))},
                                     {"n_steps", n_steps},
                                     {"seed", seed}};
  rep.config_digest = io::hex64(io::fnv1a(digest_src.dump()));
  return rep;
}

// ---------------------------------------------------------------- sim-to-real

int fraction_count(double f, int n) {
  if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("real-data fraction must lie in [0, 1]");
  return static_cast<int>(std::lround(f * n));
}

namespace {

Dataset prefix(const Dataset& d, int count) {
  Dataset out;
  out.scene = d.scene;
  out.meta = d.meta;
  out.samples.assign(d.samples.begin(), d.samples.begin() + count);
  return out;
}

std::string fmt(double v, int prec) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const std::vector<std::string>& variant_order() {
  static const std::vector<std::string> v = {"sim_only", "sim_finetune", "scratch"};
  return v;
}

}  // namespace

std::string S2RResult::table_tsv() const {
  std::ostringstream o;
  o << "variant\tfraction\tseed\tmpjpe_mm\tpve_mm\tmpjpe_uncover_mm\tmpjpe_cover1_mm\tmpjpe_cover2_mm\n";
  for (const auto& r : rows) {
    o << r.variant << '\t' << fmt(r.fraction, 4) << '\t' << r.seed << '\t' << fmt(r.report.mpjpe_mm, 4) << '\t'
      << fmt(r.report.pve_mm, 4);
    for (Cover c : kAllCovers) {
      const auto it = r.report.per_cover.find(c);
      o << '\t' << (it == r.report.per_cover.end() ? std::string("nan") : fmt(it->second.mpjpe_mm, 4));
    }
    o << '\n';
  }
  return o.str();
}

double S2RResult::median_mpjpe(const std::string& variant, double fraction) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.variant == variant && std::abs(r.fraction - fraction) < 1e-12) v.push_back(r.report.mpjpe_mm);
  return median(std::move(v));
}

S2RResult s2r_experiment(const Dataset& synthetic, const Dataset& real_train, const Dataset& real_test,
                         const S2RConfig& cfg, const TemplateSource& source, const TemplateSet& templates,
                         const ProgressFn& progress) {
  if (cfg.seeds.empty() || cfg.fractions.empty()) throw std::invalid_argument("experiment needs seeds and fractions");
  auto say = [&](const std::string& m) {
    if (progress) progress(m);
  };
  S2RResult res;
  const int n_real = static_cast<int>(real_train.samples.size());
  for (std::uint64_t seed : cfg.seeds) {
    TrainConfig syn = cfg.synthetic;
    syn.stage = Stage::synthetic;
    syn.seed = seed;
    say("seed " + std::to_string(seed) + ": synthetic pretraining (" + std::to_string(syn.steps_total) + " steps)");
    const Checkpoint sim = run_stage(synthetic, syn, cfg.model, source, templates);
    const EvalReport sim_rep = evaluate(real_test, sim, templates, cfg.eval_steps, cfg.eval_seed);
    say("seed " + std::to_string(seed) + ": sim-only MPJPE " + fmt(sim_rep.mpjpe_mm, 2) + " mm");

    for (double f : cfg.fractions) {
      const Dataset sub = prefix(real_train, fraction_count(f, n_real));
      res.rows.push_back({"sim_only", f, seed, sim_rep});

      TrainConfig ft = cfg.finetune;
      ft.stage = Stage::finetune;
      ft.from_scratch = false;
      ft.seed = seed;
      StageOptions ft_opt;
      ft_opt.init = &sim;
      const Checkpoint fck = run_stage(sub, ft, cfg.model, source, templates, ft_opt);
      res.rows.push_back({"sim_finetune", f, seed, evaluate(real_test, fck, templates, cfg.eval_steps, cfg.eval_seed)});
      say("seed " + std::to_string(seed) + " f=" + fmt(f, 2) + ": sim+finetune MPJPE " +
          fmt(res.rows.back().report.mpjpe_mm, 2) + " mm (" + std::to_string(fck.steps_total) + " steps)");

      if (sub.samples.empty()) continue;  // nothing to train a scratch model on
      TrainConfig sc = cfg.scratch;
      sc.stage = Stage::finetune;
      sc.from_scratch = true;
      sc.seed = seed;
      StageOptions sc_opt;
      sc_opt.stats = sim.stats;  // statistics stay frozen from the synthetic set
      const Checkpoint sck = run_stage(sub, sc, cfg.model, source, templates, sc_opt);
      res.rows.push_back({"scratch", f, seed, evaluate(real_test, sck, templates, cfg.eval_steps, cfg.eval_seed)});
      say("seed " + std::to_string(seed) + " f=" + fmt(f, 2) + ": scratch MPJPE " +
          fmt(res.rows.back().report.mpjpe_mm, 2) + " mm (" + std::to_string(sck.steps_total) + " steps)");
    }
  }
  return res;
}

std::vector<PlotSeries> table_series(const std::vector<TableRow>& rows) {
  std::vector<PlotSeries> out;
  std::vector<std::string> names;
  for (const auto& v : variant_order())
    for (const auto& r : rows)
      if (r.variant == v) {
        names.push_back(v);
        break;
      }
  for (const auto& r : rows)
    if (std::find(names.begin(), names.end(), r.variant) == names.end()) names.push_back(r.variant);
  for (const auto& name : names) {
    PlotSeries s;
    s.name = name;
    std::set<double> fractions;
    for (const auto& r : rows)
      if (r.variant == name) fractions.insert(r.fraction);
    for (double f : fractions) {
      std::vector<double> v;
      for (const auto& r : rows)
        if (r.variant == name && r.fraction == f) v.push_back(r.mpjpe_mm);
      s.points.emplace_back(100.0 * f, median(std::move(v)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PlotSeries> s2r_series(const S2RResult& res) {
  return table_series(parse_table(res.table_tsv()));
}

std::vector<TableRow> parse_table(const std::string& tsv) {
  std::istringstream in(tsv);
  std::string line;
  std::vector<TableRow> rows;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("variant\t", 0) == 0) continue;
    }
    std::istringstream ls(line);
    TableRow r;
    std::string f, seed, j, v;
    if (!std::getline(ls, r.variant, '\t') || !std::getline(ls, f, '\t') || !std::getline(ls, seed, '\t') ||
        !std::getline(ls, j, '\t') || !std::getline(ls, v, '\t'))
      throw std::invalid_argument("malformed table line " + std::to_string(lineno));
    try {
      r.fraction = std::stod(f);
      r.seed = std::stoull(seed);
      r.mpjpe_mm = std::stod(j);
      r.pve_mm = std::stod(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("malformed number on table line " + std::to_string(lineno));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace inbed
