// Dataset container: arrays depth f32 (N,H,W), params f32 (N,88),
// gender u8 (N,2) one-hot, cover u8 (N), domain u8 (N), participant i32 (N);
// metadata carries the scene, generation record and format version.

#include <algorithm>

#include "inbed/archive.hpp"
#include "inbed/data.hpp"

namespace inbed {

namespace {
constexpr const char* kFormat = "inbed.dataset";
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  const std::int64_t n = static_cast<std::int64_t>(ds.samples.size());
  const int H = ds.scene.image_height, W = ds.scene.image_width;
  std::vector<float> depth, params;
  std::vector<std::uint8_t> gender, cover, domain;
  std::vector<std::int32_t> participant;
  depth.reserve(static_cast<std::size_t>(n) * H * W);
  params.reserve(static_cast<std::size_t>(n) * kParamDim);
  for (const Sample& s : ds.samples) {
    if (s.depth.height != H || s.depth.width != W) throw std::invalid_argument("sample depth size differs from scene");
    depth.insert(depth.end(), s.depth.pixels.begin(), s.depth.pixels.end());
    for (int k = 0; k < kParamDim; ++k) params.push_back(static_cast<float>(s.params(k)));
    const auto flag = gender_flag(s.gender);
    gender.push_back(static_cast<std::uint8_t>(flag[0]));
    gender.push_back(static_cast<std::uint8_t>(flag[1]));
    cover.push_back(static_cast<std::uint8_t>(s.cover));
    domain.push_back(static_cast<std::uint8_t>(s.domain));
    participant.push_back(s.participant);
  }

  io::Archive ar;
  io::set_format(ar, kFormat, kDatasetVersion);
  ar.meta()["scene"] = ds.scene.to_json();
  ar.meta()["generation"] = ds.meta;
  ar.put_f32("depth", {n, H, W}, depth);
  ar.put_f32("params", {n, kParamDim}, params);
  ar.put_u8("gender", {n, 2}, gender);
  ar.put_u8("cover", {n}, cover);
  ar.put_u8("domain", {n}, domain);
  ar.put_i32("participant", {n}, participant);
  ar.save(path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const io::Archive ar = io::Archive::load(path);
  io::require_format(ar, kFormat, kDatasetVersion);
  Dataset ds;
  try {
    ds.scene = SceneConfig::from_json(ar.meta().at("scene"));
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("dataset scene record: ") + e.what());
  }
  ds.meta = ar.meta().value("generation", nlohmann::json::object());
  const int H = ds.scene.image_height, W = ds.scene.image_width;
  const auto depth = ar.get_f32("depth", {-1, H, W});
  const std::int64_t n = ar.at("depth").shape[0];
  const auto params = ar.get_f32("params", {n, kParamDim});
  const auto gender = ar.get_u8("gender", {n, 2});
  const auto cover = ar.get_u8("cover", {n});
  const auto domain = ar.get_u8("domain", {n});
  const auto participant = ar.get_i32("participant", {n});

  ds.samples.resize(static_cast<std::size_t>(n));
  const std::size_t px = static_cast<std::size_t>(H) * W;
  for (std::int64_t i = 0; i < n; ++i) {
    Sample& s = ds.samples[static_cast<std::size_t>(i)];
    s.depth = DepthImage(H, W, 0.0f);
    std::copy_n(depth.begin() + static_cast<std::ptrdiff_t>(i * px), px, s.depth.pixels.begin());
    for (int k = 0; k < kParamDim; ++k) s.params(k) = params[static_cast<std::size_t>(i * kParamDim + k)];
    const double flag[2] = {static_cast<double>(gender[2 * i]), static_cast<double>(gender[2 * i + 1])};
    try {
      s.gender = gender_from_flag(std::span<const double, 2>(flag, 2));
    } catch (const std::invalid_argument&) {
      throw io::FormatError("dataset gender flag of sample " + std::to_string(i) + " is not one-hot");
    }
    if (cover[i] > 2 || domain[i] > 1) throw io::FormatError("dataset enum out of range at sample " + std::to_string(i));
    s.cover = static_cast<Cover>(cover[i]);
    s.domain = static_cast<Domain>(domain[i]);
    s.participant = participant[i];
  }
  return ds;
}

}  // namespace inbed
