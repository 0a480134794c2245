#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "inbed/archive.hpp"
#include "inbed/data.hpp"
#include "oracles.hpp"

using namespace inbed;
namespace fs = std::filesystem;

namespace {

const TemplateSet& toy() {
  static const TemplateSet t = make_toy_template(240, 0);
  return t;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("inbed_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double laplacian_energy(const DepthImage& d, int rows) {
  double e = 0;
  for (int r = 1; r < rows - 1; ++r)
    for (int c = 1; c < d.width - 1; ++c) {
      const double l = d.at(r - 1, c) + d.at(r + 1, c) + d.at(r, c - 1) + d.at(r, c + 1) - 4.0 * d.at(r, c);
      e += l * l;
    }
  return e;
}

double grad_mag(const DepthImage& d, int r, int c) {
  const double gx = 0.5 * (d.at(std::min(r + 1, d.height - 1), c) - d.at(std::max(r - 1, 0), c));
  const double gy = 0.5 * (d.at(r, std::min(c + 1, d.width - 1)) - d.at(r, std::max(c - 1, 0)));
  return std::hypot(gx, gy);
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("scene geometry") {
    const SceneConfig s;
    CHECK_NOTHROW(s.validate());
    CHECK(s.bed_depth() == doctest::Approx(1.5));
    CHECK(s.row_x(0) == doctest::Approx(-1.05 + 0.5 * s.pixel_pitch));
    CHECK(s.col_y(31) == doctest::Approx(0.525 - 0.5 * s.pixel_pitch));
    SceneConfig big = s;
    big.bed_length = 3.0;
    CHECK_THROWS(big.validate());
    CHECK(SceneConfig::from_json(s.to_json()) == s);
  }

  TEST_CASE("sample_params") {
    const SceneConfig scene;
    const SampleRanges ranges = SampleRanges::defaults();
    std::mt19937_64 a(42), b(42);
    const SampledBody pa = sample_params(a, ranges, toy(), scene), pb = sample_params(b, ranges, toy(), scene);
    CHECK(pack(pa.params) == pack(pb.params));
    CHECK(pa.gender == pb.gender);

    SmplParams target = pa.params;
    const SampleRanges pt = SampleRanges::point(target, Gender::female);
    std::mt19937_64 c(1);
    const SampledBody pc = sample_params(c, pt, toy(), scene);
    CHECK(pc.gender == Gender::female);
    CHECK(pc.params.beta == target.beta);
    CHECK(pc.params.theta == target.theta);
    CHECK(pc.params.translation.x() == target.translation.x());
    CHECK(pc.params.translation.y() == target.translation.y());
    for (int d = 0; d < 3; ++d) {
      CHECK(pc.params.rot_sin(d) == doctest::Approx(target.rot_sin(d)).epsilon(1e-14));
      CHECK(pc.params.rot_cos(d) == doctest::Approx(target.rot_cos(d)).epsilon(1e-14));
    }

    std::mt19937_64 rng(7);
    Eigen::Matrix<double, kNumBetas, 1> lo = Eigen::Matrix<double, kNumBetas, 1>::Constant(1e9), hi = -lo;
    int lateral = 0;
    for (int i = 0; i < 1000; ++i) {
      const SampledBody s = sample_params(rng, ranges, toy(), scene);
      lo = lo.cwiseMin(s.params.beta);
      hi = hi.cwiseMax(s.params.beta);
      for (int k = 0; k < kPoseDim; ++k) {
        CHECK(s.params.theta(k / 3, k % 3) >= ranges.theta_min[k]);
        CHECK(s.params.theta(k / 3, k % 3) <= ranges.theta_max[k]);
      }
      const BodyMesh m = forward(s.params, s.gender, toy());
      CHECK(footprint_inside_bed(m, scene));
      CHECK(m.vertices.col(2).minCoeff() == doctest::Approx(scene.bed_surface_height).epsilon(1e-12));
      if (std::abs(std::atan2(s.params.rot_sin(0), s.params.rot_cos(0))) > 1.0) ++lateral;
    }
    CHECK(lo.minCoeff() >= -2.0);
    CHECK(hi.maxCoeff() <= 2.0);
    CHECK(lo.maxCoeff() < -1.9);
    CHECK(hi.minCoeff() > 1.9);
    CHECK(lateral > 330);
    CHECK(lateral < 470);

    SampleRanges impossible = ranges;
    impossible.tx_min = impossible.tx_max = 5.0;
    CHECK_THROWS_AS(sample_params(rng, impossible, toy(), scene), SamplingError);
  }

  TEST_CASE("render: flat bed and single triangle") {
    const SceneConfig s;
    const Vertices none(0, 3);
    const Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor> no_faces(0, 3);
    const RenderResult flat = render_depth(none, no_faces, s);
    for (float p : flat.depth.pixels) CHECK(p == static_cast<float>(s.camera_height - s.bed_surface_height));

    const int r = 40, c = 10;
    const double x = s.row_x(r), y = s.col_y(c), h = 0.83, e = 0.4 * s.pixel_pitch;
    Vertices V(3, 3);
    V << x - e, y - e, h, x + e, y - e, h, x - e, y + 2 * e, h;
    Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor> F(1, 3);
    F << 0, 1, 2;
    const RenderResult one = render_depth(V, F, s);
    CHECK(one.depth.at(r, c) == static_cast<float>(s.camera_height - h));
    int changed = 0;
    for (float p : one.depth.pixels) changed += p != static_cast<float>(s.bed_depth());
    CHECK(changed == 1);
    CHECK_FALSE(one.clipped);
    V(0, 0) = 3.0;
    CHECK(render_depth(V, F, s).clipped);
  }

  TEST_CASE("render matches ray casting on random bodies") {
    const SceneConfig s;
    GenerationConfig g;
    g.seed = 99;
    for (int i = 0; i < 4; ++i) {
      const Sample smp = generate_sample(g, toy(), i);
      const BodyMesh m = forward(unpack(smp.params), smp.gender, toy());
      const auto& F = toy().get(smp.gender).faces;
      const DepthImage fast = render_depth(m.vertices, F, s).depth;
      const DepthImage ref = oracle::ray_cast(m.vertices, F, s);
      double worst = 0;
      for (std::size_t p = 0; p < fast.pixels.size(); ++p)
        worst = std::max(worst, static_cast<double>(std::abs(fast.pixels[p] - ref.pixels[p])));
      CHECK(worst < 1e-6);
    }
  }

  TEST_CASE("covers") {
    GenerationConfig g;
    g.seed = 5;
    const Sample smp = generate_sample(g, toy(), 0);  // index 0 is uncovered
    REQUIRE(smp.cover == Cover::uncover);
    const DepthImage& d = smp.depth;
    std::mt19937_64 rng(3);
    CHECK(apply_cover(d, Cover::uncover, rng) == d);

    const DepthImage bed(64, 32, 1.5f);
    for (Cover c : {Cover::cover1, Cover::cover2}) {
      const DepthImage out = apply_cover_at(bed, c, 40);
      for (int r = 0; r < 64; ++r)
        for (int col = 0; col < 32; ++col) {
          const float want = r < 40 ? static_cast<float>(1.5 - cover_style(c).offset) : 1.5f;
          CHECK(out.at(r, col) == doctest::Approx(want).epsilon(1e-6));
        }
    }

    int chest = -1;
    const DepthImage c1 = apply_cover(d, Cover::cover1, rng, &chest);
    CHECK(chest >= 37);
    CHECK(chest <= 46);
    for (std::size_t p = 0; p < d.pixels.size(); ++p) CHECK(c1.pixels[p] <= d.pixels[p]);
    for (int r = chest; r < 64; ++r)
      for (int c = 0; c < 32; ++c) CHECK(c1.at(r, c) == d.at(r, c));

    const DepthImage a1 = apply_cover_at(d, Cover::cover1, 42), a2 = apply_cover_at(d, Cover::cover2, 42);
    CHECK(laplacian_energy(a2, 42) < laplacian_energy(a1, 42));
    CHECK(laplacian_energy(a1, 42) < laplacian_energy(d, 42));
    CHECK(cover_style(Cover::cover1).offset == doctest::Approx(0.005));
    CHECK(cover_style(Cover::cover2).offset == doctest::Approx(0.015));
  }

  TEST_CASE("domain shift") {
    const SceneConfig s;
    GenerationConfig g;
    const DepthImage d = generate_sample(g, toy(), 1).depth;
    std::mt19937_64 rng(1);
    CHECK(domain_shift(d, rng, ShiftProfile::none(), s) == d);

    ShiftProfile bias = ShiftProfile::none();
    bias.bias = 0.021;
    const DepthImage b = domain_shift(d, rng, bias, s);
    for (std::size_t p = 0; p < d.pixels.size(); ++p)
      CHECK(b.pixels[p] == static_cast<float>(static_cast<double>(d.pixels[p]) + 0.021));

    ShiftProfile noise = ShiftProfile::none();
    noise.noise_std = 0.005;
    std::vector<double> res;
    while (res.size() < 100000) {
      const DepthImage n = domain_shift(d, rng, noise, s);
      for (std::size_t p = 0; p < d.pixels.size(); ++p) res.push_back(n.pixels[p] - static_cast<double>(d.pixels[p]));
    }
    CHECK(std::sqrt(oracle::variance(res)) == doctest::Approx(0.005).epsilon(0.1));

    ShiftProfile sag = ShiftProfile::none();
    sag.sag = 0.04;
    const DepthImage flat(64, 32, 1.5f);
    const DepthImage sg = domain_shift(flat, rng, sag, s);
    CHECK(sg.at(32, 16) > sg.at(5, 16));
    CHECK(sg.at(32, 16) == doctest::Approx(1.5 + 0.04).epsilon(1e-3));
    CHECK(sg.at(0, 0) == 1.5f);

    std::mt19937_64 r1(9), r2(9);
    const ShiftProfile full;
    CHECK(domain_shift(d, r1, full, s) == domain_shift(d, r2, full, s));
    CHECK(participant_bias(0.03, 4) == participant_bias(0.03, 4));
    CHECK(std::abs(participant_bias(0.03, 4)) <= 0.03);
  }

  TEST_CASE("augmentation") {
    const SceneConfig s;
    GenerationConfig g;
    const DepthImage d = generate_sample(g, toy(), 2).depth;
    std::mt19937_64 rng(2);
    const Augmented same = augment(d, rng, AugmentPolicy::off(), s);
    CHECK(same.depth == d);
    CHECK(same.rotation == 0.0);

    DepthImage e = d;
    erase_rect(e, 10, 4, 5, 7, static_cast<float>(s.bed_depth()));
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 32; ++c) {
        const bool in = r >= 10 && r < 15 && c >= 4 && c < 11;
        CHECK(e.at(r, c) == (in ? static_cast<float>(s.bed_depth()) : d.at(r, c)));
      }

    const DepthImage full_turn = rotate_image(d, 2.0 * std::numbers::pi, 1.5f);
    double worst = 0;
    for (std::size_t p = 0; p < d.pixels.size(); ++p)
      worst = std::max(worst, static_cast<double>(std::abs(full_turn.pixels[p] - d.pixels[p])));
    CHECK(worst < 1e-4);
    CHECK(rotate_image(d, 0.0, 1.5f) == d);

    AugmentPolicy always;
    always.p_rotate = always.p_erase = always.p_noise = 1.0;
    std::mt19937_64 a(5), b(5);
    const Augmented x = augment(d, a, always, s), y = augment(d, b, always, s);
    CHECK(x.depth == y.depth);
    CHECK(std::abs(x.rotation) <= 15.0 * std::numbers::pi / 180.0);
    CHECK(x.rotation != 0.0);
  }

  TEST_CASE("label rotation matches the rotated rendering") {
    const SceneConfig s;
    GenerationConfig g;
    g.seed = 21;
    for (int i = 0; i < 3; ++i) {
      const Sample smp = generate_sample(g, toy(), 3 * i);
      const SmplParams p = unpack(smp.params);
      const double angle = 0.2;
      const SmplParams q = rotate_params_about_vertical(p, angle, smp.gender, toy());
      const BodyMesh a = forward(p, smp.gender, toy()), b = forward(q, smp.gender, toy());
      // Rotation about the vertical axis through the bed centre, in world coordinates.
      const Mat3 Rz = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
      double dev = 0;
      for (Eigen::Index v = 0; v < a.vertices.rows(); ++v)
        dev = std::max(dev, (Rz * a.vertices.row(v).transpose() - b.vertices.row(v).transpose()).norm());
      CHECK(dev < 1e-9);
    }
  }

  TEST_CASE("normalisation statistics") {
    Sample a;
    a.params = pack(SmplParams::rest());
    const NormStats same = compute_norm_stats({a, a}, toy());
    CHECK(same.sigma_beta == NormStats::kFloor);
    CHECK(same.sigma_theta == NormStats::kFloor);
    CHECK(same.sigma_psi == NormStats::kFloor);
    CHECK(same.sigma_joints == NormStats::kFloor);
    CHECK(same.sigma_vertices == NormStats::kFloor);
    CHECK(same.latent.std == Latent::Constant(LatentStandardizer::kStdFloor));

    Sample lo = a, hi = a;
    lo.params(3) = -1.0;
    hi.params(3) = 1.0;
    const NormStats s = compute_norm_stats({lo, hi}, toy());
    CHECK(s.sigma_beta == doctest::Approx(std::sqrt(2.0 / 20.0)).epsilon(1e-14));
    CHECK(s.sigma_theta == NormStats::kFloor);
    CHECK(s.sigma_psi == NormStats::kFloor);
    CHECK(s.latent.std(3) == doctest::Approx(1.0));

    GenerationConfig g;
    g.n_samples = 12;
    const Dataset ds = generate_dataset(g, toy());
    std::vector<Sample> rev(ds.samples.rbegin(), ds.samples.rend());
    const NormStats f = compute_norm_stats(ds.samples, toy()), r = compute_norm_stats(rev, toy());
    CHECK(f.sigma_beta == r.sigma_beta);
    CHECK(f.sigma_theta == r.sigma_theta);
    CHECK(f.sigma_psi == r.sigma_psi);
    CHECK(f.sigma_joints == r.sigma_joints);
    CHECK(f.sigma_vertices == r.sigma_vertices);
    CHECK(f.latent.mean == r.latent.mean);
    // Each component is centred on its own mean before pooling.
    double acc = 0;
    for (int k = 0; k < 6; ++k) {
      std::vector<double> col;
      for (const Sample& smp : ds.samples) col.push_back(smp.params(param_offset::rot_sin + k));
      acc += oracle::variance(col) * (col.size() - 1.0) / col.size();
    }
    CHECK(f.sigma_psi == doctest::Approx(std::sqrt(acc / 6.0)).epsilon(1e-12));
    const NormStats back = NormStats::from_json(f.to_json());
    CHECK(back.sigma_vertices == f.sigma_vertices);
    CHECK(back.latent.std == f.latent.std);
    CHECK_THROWS(compute_norm_stats({}, toy()));
  }

  TEST_CASE("generation determinism and assignment") {
    GenerationConfig g;
    g.n_samples = 9;
    g.seed = 3;
    g.domain = Domain::pseudo_real;
    g.first_participant = 80;
    g.n_participants = 4;
    const Dataset a = generate_dataset(g, toy()), b = generate_dataset(g, toy());
    REQUIRE(a.samples.size() == 9);
    for (int i = 0; i < 9; ++i) {
      CHECK(a.samples[i] == b.samples[i]);
      CHECK(a.samples[i] == generate_sample(g, toy(), i));
      CHECK(a.samples[i].cover == kAllCovers[i % 3]);
      CHECK(a.samples[i].participant == 80 + i % 4);
      CHECK(a.samples[i].domain == Domain::pseudo_real);
      CHECK(a.samples[i].params.cast<float>().cast<double>() == a.samples[i].params);
      const BodyMesh m = forward(unpack(a.samples[i].params), a.samples[i].gender, toy());
      CHECK(footprint_inside_bed(m, g.scene));
      for (float p : a.samples[i].depth.pixels) {
        CHECK(p > 0.0f);
        CHECK(p <= 2.0f);
      }
    }
    GenerationConfig other = g;
    other.seed = 4;
    CHECK_FALSE(generate_sample(other, toy(), 0) == a.samples[0]);
  }

  TEST_CASE("dataset container") {
    const fs::path dir = scratch_dir("dataset");
    GenerationConfig g;
    g.n_samples = 10;
    g.seed = 8;
    const Dataset ds = generate_dataset(g, toy());
    write_dataset(dir / "a.ds", ds);
    write_dataset(dir / "b.ds", generate_dataset(g, toy()));
    const Dataset back = read_dataset(dir / "a.ds");
    REQUIRE(back.samples.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(back.samples[i] == ds.samples[i]);
    CHECK(back.scene == ds.scene);
    CHECK(back.meta == ds.meta);

    auto bytes = [](const fs::path& p) {
      std::ifstream f(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(f), {});
    };
    CHECK(bytes(dir / "a.ds") == bytes(dir / "b.ds"));

    io::Archive ar = io::Archive::load(dir / "a.ds");
    io::set_format(ar, "inbed.dataset", kDatasetVersion + 1);
    ar.save(dir / "v2.ds");
    CHECK_THROWS_AS(read_dataset(dir / "v2.ds"), io::VersionError);

    const std::string full = bytes(dir / "a.ds");
    std::ofstream(dir / "cut.ds", std::ios::binary) << full.substr(0, full.size() / 2);
    CHECK_THROWS_AS(read_dataset(dir / "cut.ds"), io::FormatError);
    CHECK_THROWS_AS(read_dataset(dir / "missing.ds"), io::IoError);
    fs::remove_all(dir);
  }
}
