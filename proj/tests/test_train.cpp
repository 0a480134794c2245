#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "inbed/archive.hpp"
#include "inbed/losses.hpp"
#include "inbed/train.hpp"

using namespace inbed;
using fixture::toy;

namespace {

Decoded decode(const ParamVector& p, Gender g) { return {p, forward(unpack(p), g, toy())}; }

ParamVector random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  ParamVector x;
  for (int i = 0; i < kParamDim; ++i) x(i) = u(rng);
  x.segment<3>(param_offset::rot_cos).array() += 1.0;
  return x;
}

LossWeights odd_weights() {
  LossWeights w;
  w.lambda_beta = 0.3;
  w.lambda_theta = 0.7;
  w.lambda_psi = 1.3;
  w.lambda_joints = 2.1;
  w.vertex_norm = 0.01;
  w.lambda_v2v = 1.0;
  return w;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("smpl loss examples") {
    std::mt19937_64 rng(1);
    const LossWeights w = odd_weights();
    const ParamVector gt = random_params(rng);
    const Decoded g = decode(gt, Gender::male);
    CHECK(smpl_loss(gt, g.mesh.joints, gt, g.mesh.joints, w) == 0.0);

    ParamVector p = gt;
    p(param_offset::beta + 4) += 1.0;
    CHECK(smpl_loss(p, g.mesh.joints, gt, g.mesh.joints, w) == doctest::Approx(w.lambda_beta).epsilon(1e-14));

    for (int k = 0; k < 5; ++k) {
      const ParamVector a = random_params(rng), b = random_params(rng);
      const Decoded da = decode(a, Gender::female), db = decode(b, Gender::female);
      double beta = 0, theta = 0, psi = 0, joints = 0;
      for (int i = 0; i < 10; ++i) beta += std::abs(a(i) - b(i));
      for (int i = 10; i < 79; ++i) theta += std::abs(a(i) - b(i));
      for (int i = 82; i < 88; ++i) psi += std::abs(a(i) - b(i));
      for (int j = 0; j < 24; ++j) {
        double s = 0;
        for (int d = 0; d < 3; ++d) s += std::pow(da.mesh.joints(j, d) - db.mesh.joints(j, d), 2);
        joints += std::sqrt(s);
      }
      const double want = 0.3 * beta + 0.7 * theta + 1.3 * psi + 2.1 * joints;
      CHECK(smpl_loss(a, da.mesh.joints, b, db.mesh.joints, w) == doctest::Approx(want).epsilon(1e-12));
      // Translation is not a parameter term.
      ParamVector t = a;
      t(80) += 0.3;
      CHECK(smpl_loss(t, da.mesh.joints, a, da.mesh.joints, w) == 0.0);
    }
  }

  TEST_CASE("v2v and total loss") {
    std::mt19937_64 rng(2);
    const Decoded a = decode(random_params(rng), Gender::male);
    CHECK(v2v_loss(a.mesh.vertices, a.mesh.vertices, 0.5) == 0.0);
    const double sigma_v = 0.37;
    const double norm = 1.0 / (a.mesh.vertices.rows() * sigma_v);
    const Eigen::RowVector3d d(0.01, -0.02, 0.005);
    const Vertices moved = a.mesh.vertices.rowwise() + d;
    CHECK(v2v_loss(moved, a.mesh.vertices, norm) == doctest::Approx(d.norm() / sigma_v).epsilon(1e-12));
    CHECK_THROWS_AS(v2v_loss(moved.topRows(10), a.mesh.vertices, norm), std::invalid_argument);

    const Decoded b = decode(random_params(rng), Gender::male);
    double brute = 0;
    for (Eigen::Index i = 0; i < b.mesh.vertices.rows(); ++i) brute += (b.mesh.vertices.row(i) - a.mesh.vertices.row(i)).norm();
    CHECK(v2v_loss(b.mesh.vertices, a.mesh.vertices, 0.2) == doctest::Approx(0.2 * brute).epsilon(1e-12));

    LossWeights w = odd_weights();
    CHECK(total_loss(a, a, w).total == 0.0);
    w.lambda_v2v = 0.0;
    const LossParts zero = total_loss(b, a, w);
    CHECK(zero.total == zero.smpl);
    w.lambda_v2v = 2.0;
    const LossParts two = total_loss(b, a, w);
    CHECK(two.total == doctest::Approx(two.smpl + 2.0 * two.v2v).epsilon(1e-15));
    CHECK(two.smpl > 0);
    CHECK(two.v2v > 0);
  }

  TEST_CASE("loss weights from statistics") {
    NormStats s;
    s.sigma_beta = 0.5;
    s.sigma_theta = 0.25;
    s.sigma_psi = 0.4;
    s.sigma_joints = 0.3;
    s.sigma_vertices = 0.35;
    const LossWeights w = LossWeights::from_stats(s, 240, 1.0);
    CHECK(w.lambda_beta == doctest::Approx(1.0 / (10 * 0.5)));
    CHECK(w.lambda_theta == doctest::Approx(1.0 / (69 * 0.25)));
    CHECK(w.lambda_psi == doctest::Approx(1.0 / (6 * 0.4)));
    CHECK(w.lambda_joints == doctest::Approx(1.0 / (24 * 0.3)));
    CHECK(w.vertex_norm == doctest::Approx(1.0 / (240 * 0.35)));
    CHECK(w.lambda_v2v == 1.0);
    LossWeights bad = w;
    bad.lambda_psi = 0;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("loss gradient matches central differences") {
    std::mt19937_64 rng(3);
    const LossWeights w = odd_weights();
    const Decoded gt = decode(random_params(rng), Gender::female);
    const ParamVector x = random_params(rng);
    auto f = [&](const ParamVector& p) { return total_loss(decode(p, Gender::female), gt, w).total; };
    PoseTrace tr;
    Decoded pred{x, forward(unpack(x), Gender::female, toy(), &tr)};
    LossGrad lg;
    total_loss_grad(pred, gt, w, lg);
    const ParamVector g = lg.params + backward(tr, unpack(x), lg.vertices, lg.joints);
    for (int i = 0; i < kParamDim; ++i) {
      ParamVector a = x, b = x;
      a(i) += 1e-6;
      b(i) -= 1e-6;
      const double fd = (f(a) - f(b)) / 2e-6;
      CHECK(std::abs(fd - g(i)) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }

  TEST_CASE("learning-rate schedule") {
    CHECK(lr_at(0, Stage::finetune, 9, 1e-4) == 1e-4);
    CHECK(lr_at(5, Stage::finetune, 9, 1e-4) == doctest::Approx(0.5e-4).epsilon(1e-15));
    CHECK(lr_at(9, Stage::finetune, 9, 1e-4) == doctest::Approx(1e-4 * (1.0 - 9.0 / 10.0)).epsilon(1e-15));
    for (int s : {0, 3, 100, 20000}) CHECK(lr_at(s, Stage::synthetic, 20000, 2e-4) == 2e-4);
    // Affine in the step.
    const double a = lr_at(10, Stage::finetune, 99, 1.0), b = lr_at(20, Stage::finetune, 99, 1.0),
                 c = lr_at(30, Stage::finetune, 99, 1.0);
    CHECK(b - a == doctest::Approx(c - b).epsilon(1e-14));
    CHECK_THROWS_AS(lr_at(10, Stage::finetune, 9, 1e-4), std::out_of_range);
    CHECK_THROWS_AS(lr_at(-1, Stage::synthetic, 9, 1e-4), std::out_of_range);
    CHECK(finetune_steps(40, 32, 50) == 100);
    CHECK(finetune_steps(400, 32, 50) == 650);
    CHECK(finetune_steps(32, 32, 3) == 3);
    CHECK(finetune_steps(0, 32, 3) == 0);
  }

  TEST_CASE("decoupled weight decay and Adam step") {
    std::vector<double> w = {1.0, -2.0, 0.5}, g = {0.1, 0.0, -3.0};
    AdamState st;
    adamw_update(w, g, st, 0.1, 0.01, 0.9, 0.999, 1e-8);
    // First step: m_hat = g, v_hat = g^2, so the Adam move is lr * sign(g) (up to eps).
    CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 0.1 / (0.1 + 1e-8)).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(-2.0 + 0.1 * 0.01 * 2.0).epsilon(1e-14));
    CHECK(w[2] == doctest::Approx(0.5 - 0.1 * 0.01 * 0.5 + 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-14));
    CHECK(st.t == 1);
    CHECK(st.m[2] == doctest::Approx(-0.3));
    CHECK(st.v[2] == doctest::Approx(0.001 * 9.0));

    std::vector<double> frozen = {1.0, -2.0, 0.5};
    const std::vector<double> before = frozen;
    AdamState s2;
    adamw_update(frozen, g, s2, 0.0, 0.01, 0.9, 0.999, 1e-8);
    CHECK(frozen == before);
  }

  TEST_CASE("batches walk seeded permutations") {
    std::vector<int> seen;
    for (int step = 0; step < 3; ++step)
      for (int i : batch_indices(10, 4, 7, step)) seen.push_back(i);
    CHECK(seen.size() == 10);
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < 10; ++i) CHECK(seen[i] == i);
    CHECK(batch_indices(10, 4, 7, 2).size() == 2);
    CHECK(batch_indices(10, 4, 7, 1) == batch_indices(10, 4, 7, 1));
    CHECK(batch_indices(10, 4, 7, 0) != batch_indices(10, 4, 7, 3));  // next epoch reshuffles
    CHECK(batch_indices(0, 4, 7, 0).empty());
  }

  TEST_CASE("zero learning rate leaves weights bitwise unchanged") {
    const Dataset data = fixture::mini_dataset(6, 1);
    Denoiser net(fixture::mini_model());
    net.init_weights(2);
    const std::vector<double> before = net.params().values();
    const NormStats stats = compute_norm_stats(data.samples, toy());
    const DiffusionSchedule sched = make_schedule(100, 1e-4, 0.2);
    TrainContext ctx{&toy(), &sched, &stats, LossWeights::from_stats(stats, 240), data.scene, fixture::mini_train()};
    ctx.cfg.lr_init = 0.0;
    AdamState adam;
    std::vector<const Sample*> batch = {&data.samples[0], &data.samples[1]};
    const StepResult r = train_step(net, adam, batch, ctx, 0, 10);
    CHECK(r.loss > 0);
    CHECK(net.params().values() == before);
  }

  TEST_CASE("numeric failures are reported") {
    const Dataset data = fixture::mini_dataset(2, 1);
    Denoiser net(fixture::mini_model());
    net.init_weights(2);
    net.params().values()[net.params().size() - 1] = std::numeric_limits<double>::quiet_NaN();
    const NormStats stats = compute_norm_stats(data.samples, toy());
    const DiffusionSchedule sched = make_schedule(100, 1e-4, 0.2);
    TrainContext ctx{&toy(), &sched, &stats, LossWeights::from_stats(stats, 240), data.scene, fixture::mini_train()};
    AdamState adam;
    std::vector<const Sample*> batch = {&data.samples[0]};
    CHECK_THROWS_AS(train_step(net, adam, batch, ctx, 0, 10), NumericError);
  }

  TEST_CASE("stage runs are deterministic and resume exactly") {
    const Dataset data = fixture::mini_dataset(12, 3);
    const TemplateSource src;
    const TrainConfig cfg = fixture::mini_train();
    std::ostringstream log_a;
    StageOptions oa;
    oa.log = &log_a;
    const Checkpoint a = run_stage(data, cfg, fixture::mini_model(), src, toy(), oa);
    const Checkpoint b = run_stage(data, cfg, fixture::mini_model(), src, toy());
    CHECK(a.step == 10);
    CHECK(a.finished());
    CHECK(a.weights == b.weights);
    CHECK(a.adam.m == b.adam.m);

    std::istringstream lines(log_a.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.at("step").get<int>() == ++n);
      CHECK(j.contains("lr"));
      CHECK(j.contains("loss"));
      CHECK(j.contains("wall_time"));
    }
    CHECK(n == 10);

    const auto dir = fixture::scratch_dir("resume");
    StageOptions half;
    half.stop_at_step = 5;
    const Checkpoint partial = run_stage(data, cfg, fixture::mini_model(), src, toy(), half);
    CHECK(partial.step == 5);
    CHECK_FALSE(partial.finished());
    save_checkpoint(dir / "partial.ckpt", partial);
    const Checkpoint loaded = load_checkpoint(dir / "partial.ckpt");
    CHECK(loaded.weights == partial.weights);
    CHECK(loaded.adam.v == partial.adam.v);
    CHECK(loaded.adam.t == partial.adam.t);
    StageOptions cont;
    cont.init = &loaded;
    const Checkpoint resumed = run_stage(data, cfg, fixture::mini_model(), src, toy(), cont);
    CHECK(resumed.step == 10);
    CHECK(resumed.weights == a.weights);
    CHECK(resumed.adam.m == a.adam.m);
    CHECK(resumed.adam.v == a.adam.v);

    save_checkpoint(dir / "a.ckpt", a);
    save_checkpoint(dir / "b.ckpt", b);
    CHECK(fixture::file_bytes(dir / "a.ckpt") == fixture::file_bytes(dir / "b.ckpt"));

    TrainConfig other = cfg;
    other.lr_init = 5e-4;
    CHECK_THROWS_AS(run_stage(data, other, fixture::mini_model(), src, toy(), cont), ConfigError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("fine-tune stage contracts") {
    const Dataset syn = fixture::mini_dataset(8, 4);
    const Dataset real = fixture::mini_dataset(10, 5, Domain::pseudo_real);
    const TemplateSource src;
    const Checkpoint pre = run_stage(syn, fixture::mini_train(), fixture::mini_model(), src, toy());

    TrainConfig ft = fixture::mini_train(Stage::finetune);
    ft.batch_size = 4;
    ft.epochs = 3;
    CHECK_THROWS_AS(run_stage(real, ft, fixture::mini_model(), src, toy()), ConfigError);

    StageOptions o;
    o.init = &pre;
    std::ostringstream log;
    o.log = &log;
    const Checkpoint fin = run_stage(real, ft, fixture::mini_model(), src, toy(), o);
    CHECK(fin.steps_total == 9);  // ceil(10 / 4) * 3
    CHECK(fin.step == 9);
    CHECK(fin.train.stage == Stage::finetune);
    CHECK(fin.stats.latent.mean == pre.stats.latent.mean);  // statistics stay frozen
    CHECK(fin.adam.t == 9);                                 // moments restart with the new stage
    const auto first = nlohmann::json::parse(log.str().substr(0, log.str().find('\n')));
    CHECK(first.at("lr").get<double>() == ft.lr_init);

    Dataset empty = real;
    empty.samples.clear();
    const Checkpoint none = run_stage(empty, ft, fixture::mini_model(), src, toy(), o);
    CHECK(none.steps_total == 0);
    CHECK(none.weights == pre.weights);

    TrainConfig scratch = ft;
    scratch.from_scratch = true;
    StageOptions so;
    so.stats = pre.stats;
    const Checkpoint sc = run_stage(real, scratch, fixture::mini_model(), src, toy(), so);
    CHECK(sc.stats.latent.std == pre.stats.latent.std);
    CHECK(sc.weights != fin.weights);

    // A synthetic stage cannot start from a fine-tuned checkpoint.
    StageOptions bad;
    bad.init = &fin;
    CHECK_THROWS_AS(run_stage(syn, fixture::mini_train(), fixture::mini_model(), src, toy(), bad), ConfigError);
    // Image-size mismatch between model and data.
    DenoiserConfig wrong = fixture::mini_model();
    wrong.depth_height = 32;
    CHECK_THROWS_AS(run_stage(syn, fixture::mini_train(), wrong, src, toy()), ConfigError);
  }

  TEST_CASE("checkpoint format errors") {
    const auto dir = fixture::scratch_dir("ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), io::IoError);
    io::Archive ar;
    io::set_format(ar, "inbed.dataset", 1);
    ar.save(dir / "wrong.ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "wrong.ckpt"), io::FormatError);
    io::Archive v;
    io::set_format(v, "inbed.checkpoint", Checkpoint::kVersion + 1);
    v.save(dir / "v2.ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "v2.ckpt"), io::VersionError);
    std::filesystem::remove_all(dir);
  }
}
