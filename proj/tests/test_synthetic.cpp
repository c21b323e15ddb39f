#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "edidub/io.hpp"
#include "edidub/synthetic.hpp"
#include "test_util.hpp"

using namespace edidub;

namespace {

BlobSpec desk_spec(int frames = 24, int size = 16) {
  BlobSpec s;
  s.frames = frames;
  s.image_size = size;
  s.aperture_map = default_aperture_map(16);
  s.identity_hue = 0.08;
  return s;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

UnitSequence constant_units(int frames, int unit, int vocab) { return UnitSequence{std::vector<int>(2 * frames, unit), vocab}; }

}  // namespace

TEST_CASE("blob specs") {
  auto s = desk_spec();
  CHECK_NOTHROW(s.validate());
  const auto map = default_aperture_map(16);
  CHECK(std::set<double>(map.begin(), map.end()).size() == 16);
  CHECK(*std::min_element(map.begin(), map.end()) == 0.0);
  CHECK(*std::max_element(map.begin(), map.end()) == 1.0);
  s.mouth_cy = 0.5;
  CHECK_THROWS_AS(s.validate(), ArgumentError);
  s = desk_spec();
  s.aperture_map[3] = s.aperture_map[4];
  CHECK_THROWS_AS(s.validate(), ArgumentError);
  s = desk_spec();
  s.mouth_half_width = 0.4;
  CHECK_THROWS_AS(s.validate(), ArgumentError);
}

TEST_CASE("rendering") {
  const auto spec = desk_spec();
  std::mt19937_64 rng(1);
  SUBCASE("shapes, range and mask") {
    const auto r = render_blob_clip(spec, random_unit_sequence(24, 16, rng));
    CHECK(r.clip.shape() == Shape4{24, 16, 16, 3});
    CHECK(r.clip.values().maxCoeff() <= 1.0f);
    CHECK(r.clip.values().minCoeff() >= -1.0f);
    CHECK(r.mask.count() > 0);
    CHECK(r.landmarks.size() == 24);
    CHECK(r.landmarks[0].points.size() == 18);
    CHECK(r.landmarks[0].lip_indices == std::vector<int>{14, 15, 16, 17});
    // eyes stay outside the editable region
    CHECK_FALSE(r.mask(0, int(0.36 * 16), int(0.35 * 16)));
    // the mouth box is inside it
    for (int y = int(0.54 * 16); y < int(0.82 * 16); ++y) CHECK(r.mask(0, y, 8));
  }
  SUBCASE("constant aperture map keeps the mouth still") {
    const int closed = int(std::find(spec.aperture_map.begin(), spec.aperture_map.end(), 0.0) - spec.aperture_map.begin());
    const auto r = render_blob_clip(spec, constant_units(24, closed, 16));
    for (int t = 1; t < 24; ++t) CHECK(r.clip.slice_frames(t, t + 1) == r.clip.slice_frames(0, 1));
  }
  SUBCASE("identity hue only changes skin pixels") {
    auto other = spec;
    other.identity_hue = 0.55;
    const auto u = random_unit_sequence(24, 16, rng);
    const auto a = render_blob_clip(spec, u).clip, b = render_blob_clip(other, u).clip;
    CHECK(!(a == b));
    // background corner and the eye centres are unaffected
    for (int c = 0; c < 3; ++c) {
      CHECK(a(0, 0, 0, c) == b(0, 0, 0, c));
      CHECK(a(3, 15, 15, c) == b(3, 15, 15, c));
    }
  }
  SUBCASE("NULL units cannot be rendered") {
    CHECK_THROWS_AS(render_blob_clip(spec, UnitSequence::null(48, 16)), ArgumentError);
  }
}

TEST_CASE("aperture measurement") {
  for (int size : {16, 48}) {
    const auto spec = desk_spec(24, size);
    const double row = 1.0 / spec.max_mouth_height_px();
    const int closed = int(std::find(spec.aperture_map.begin(), spec.aperture_map.end(), 0.0) - spec.aperture_map.begin());
    const int open = int(std::find(spec.aperture_map.begin(), spec.aperture_map.end(), 1.0) - spec.aperture_map.begin());
    for (double a : measure_aperture(render_blob_clip(spec, constant_units(24, closed, 16)).clip, spec))
      CHECK(std::abs(a) <= row);
    for (double a : measure_aperture(render_blob_clip(spec, constant_units(24, open, 16)).clip, spec))
      CHECK(std::abs(a - 1.0) <= row);
    std::mt19937_64 rng(2);
    const auto u = random_unit_sequence(24, 16, rng);
    const auto measured = measure_aperture(render_blob_clip(spec, u).clip, spec);
    const auto commanded = commanded_aperture(spec, u);
    for (int t = 0; t < 24; ++t) CHECK(std::abs(measured[t] - commanded[t]) <= row);
    CHECK(pearson(measured, commanded) >= 0.99);
  }
}

TEST_CASE("unit streams and speech features") {
  std::mt19937_64 rng(3);
  const auto u = random_unit_sequence(25, 16, rng);
  CHECK(u.size() == 50);
  for (int x : u.units) CHECK((x >= 0 && x < 16));
  const auto model = SpeechFeatureModel::make(16, 12, 4);
  SUBCASE("noise-free features quantize back exactly") {
    const auto f = synth_speech_features(u, model, 0.0, 1);
    CHECK(quantize(f, Codebook{model.centroids}).units == u.units);
  }
  SUBCASE("small noise is recovered by fitting a codebook") {
    UnitSequence long_u = random_unit_sequence(1000, 16, rng);
    const auto f = synth_speech_features(long_u, model, 0.01 * model.min_separation(), 5);
    const auto cb = fit_codebook(f, 16, 6);
    const auto q = quantize(f, cb);
    std::map<int, std::map<int, int>> votes;
    for (int i = 0; i < long_u.size(); ++i) ++votes[q.units[i]][long_u.units[i]];
    std::map<int, int> label;
    for (auto& [cluster, v] : votes)
      label[cluster] = std::max_element(v.begin(), v.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
    int correct = 0;
    for (int i = 0; i < long_u.size(); ++i) correct += label[q.units[i]] == long_u.units[i];
    CHECK(double(correct) / long_u.size() >= 0.99);
  }
  SUBCASE("relabeling the alphabet leaves the clustering unchanged") {
    std::vector<int> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    SpeechFeatureModel permuted{FeatureMatrix(16, 12)};
    for (int i = 0; i < 16; ++i) permuted.centroids.row(perm[i]) = model.centroids.row(i);
    UnitSequence pu = u;
    for (int& x : pu.units) x = perm[x];
    CHECK(synth_speech_features(u, model, 0.0, 1) == synth_speech_features(pu, permuted, 0.0, 1));
  }
}

TEST_CASE("identity embedder") {
  const auto spec = desk_spec(4, 16);
  std::mt19937_64 rng(4);
  const auto clip = render_blob_clip(spec, random_unit_sequence(4, 16, rng)).clip;
  const auto e = synth_identity_embedder(clip);
  for (long r = 0; r < e.rows(); ++r) CHECK(std::abs(e.row(r).norm() - 1.0) <= 1e-9);
  Clip same(Shape4{2, 16, 16, 3});
  same.set_frames(0, clip.slice_frames(1, 2));
  same.set_frames(1, clip.slice_frames(1, 2));
  const auto es = synth_identity_embedder(same);
  CHECK(es.row(0) == es.row(1));
  Clip patched = clip;
  for (int y = 6; y < 8; ++y)
    for (int x = 6; x < 8; ++x)
      for (int c = 0; c < 3; ++c) patched(0, y, x, c) = -patched(0, y, x, c);
  const auto ep = synth_identity_embedder(patched);
  CHECK(1.0 - e.row(0).dot(ep.row(0)) < 0.01);
  CHECK(1.0 - e.row(0).dot(ep.row(0)) > 0.0);
}

TEST_CASE("clip, mask and sample files") {
  const auto dir = std::filesystem::temp_directory_path() / "edidub_io_test";
  std::filesystem::remove_all(dir);
  std::mt19937_64 rng(5);
  const auto spec = desk_spec(6, 16);
  const auto u = random_unit_sequence(6, 16, rng);
  const auto r = render_blob_clip(spec, u);
  write_clip(dir / "clip", r.clip);
  CHECK(read_clip(dir / "clip") == r.clip);
  write_mask(dir / "mask.bin", r.mask);
  const auto m = read_mask(dir / "mask.bin");
  CHECK(m.count() == r.mask.count());
  CHECK(m.matches(r.clip.shape()));
  write_blob_spec(dir / "spec.txt", spec);
  const auto back = read_blob_spec(dir / "spec.txt");
  CHECK(back.aperture_map == spec.aperture_map);
  CHECK(back.identity_hue == spec.identity_hue);
  CHECK(render_blob_clip(back, u).clip == r.clip);
  write_dataset_manifest(dir, {"a", "b"});
  const auto samples = read_dataset_manifest(dir);
  REQUIRE(samples.size() == 2);
  CHECK(samples[1].units() == dir / "b" / "units.txt");
  CHECK_THROWS_AS(read_clip(dir / "missing"), DataError);
  CHECK_THROWS_AS(read_dataset_manifest(dir / "nowhere"), ConfigError);
  std::filesystem::remove_all(dir);
}
