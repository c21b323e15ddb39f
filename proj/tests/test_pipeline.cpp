#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "edidub/commands.hpp"
#include "edidub/io.hpp"
#include "edidub/resample.hpp"
#include "test_util.hpp"

using namespace edidub;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("edidub_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

DenoiserConfig tiny_lsd() {
  DenoiserConfig c;
  c.input_frames = 8;
  c.spatial_size = 8;
  c.base_channels = 4;
  c.channel_multipliers = {1, 2};
  c.time_embed_dim = 8;
  c.norm_groups = 2;
  c.unit_vocab = 5;
  c.unit_embed_dim = 4;
  return c;
}

DenoiserConfig tiny_srd() {
  DenoiserConfig c = tiny_lsd();
  c.input_frames = 2;
  c.spatial_size = 16;
  c.unit_vocab = 0;
  c.unit_embed_dim = 0;
  return c;
}

PipelineConfig fast_config() {
  PipelineConfig c;
  c.schedule_inference_steps = 5;
  c.section_length = 12;
  c.section_overlap = 4;
  c.window_size = 8;
  c.window_step = 4;
  return c;
}

UnitSequence random_units(int frames, int vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, vocab - 1);
  UnitSequence s{std::vector<int>(2 * frames), vocab};
  for (auto& x : s.units) x = u(rng);
  return s;
}

std::vector<LandmarkFrame> flat_landmarks(int frames, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 3.0);
  std::vector<LandmarkFrame> out(frames);
  for (auto& f : out) {
    f.points = {{d(rng), d(rng)}, {d(rng), d(rng)}, {1, 0}, {1, d(rng)}};
    f.lip_indices = {2, 3};
  }
  return out;
}

bool equal_outside(const Clip& a, const Clip& b, const RegionMask& m) {
  for (long v = 0; v < m.voxels(); ++v)
    if (!m.at(v))
      for (int c = 0; c < a.channels(); ++c)
        if (a.values()[v * a.channels() + c] != b.values()[v * b.channels() + c]) return false;
  return true;
}

}  // namespace

TEST_CASE("pipeline configuration") {
  const auto desk = PipelineConfig::named("desk");
  const auto paper = PipelineConfig::named("paper");
  CHECK(desk.lsd == DenoiserConfig::lsd_desk());
  CHECK(paper.lsd == DenoiserConfig::lsd_paper());
  CHECK(paper.srd == DenoiserConfig::srd_paper());
  CHECK(paper.lsd_train.total_steps == 500000);
  CHECK(paper.srd_augmentation.lr_min == 32);
  CHECK(paper.window_size == 24);
  CHECK(paper.window_step == 12);
  CHECK(paper.section_length == 120);
  CHECK(paper.section_overlap == 12);
  CHECK(paper.guidance_scale == 5.0);
  CHECK_NOTHROW(desk.validate());
  CHECK_NOTHROW(paper.validate());
  CHECK_THROWS_AS(PipelineConfig::named("huge"), ConfigError);

  for (const auto& c : {desk, paper}) {
    std::stringstream ss;
    write_pipeline_config(ss, c);
    CHECK(read_pipeline_config(ss) == c);
  }

  PipelineConfig c = desk;
  c.set_assignment("lsd.channel_multipliers=1,2,2");
  c.set_assignment("dub.guidance=2.5");
  c.set_assignment("lsd_train.steps=77");
  CHECK(c.lsd.channel_multipliers == std::vector<int>{1, 2, 2});
  CHECK(c.guidance_scale == 2.5);
  CHECK(c.lsd_target_steps() == 77);
  CHECK(c.dub_settings().guidance.scale == 2.5);
  CHECK_FALSE(c.dub_settings().clamp_intermediate);
  c.set_assignment("dub.clamp_intermediate=true");
  CHECK(c.dub_settings().clamp_intermediate);
  CHECK_THROWS_AS(c.set_assignment("dub.clamp_intermediate=yes"), ConfigError);
  CHECK(c.dub_settings().srd_start == 600);
  c.set_assignment("dub.srd_start=300");
  CHECK(c.dub_settings().srd_start == 300);
  c.set_assignment("dub.srd_start=0");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.set_assignment("dub.srd_start=300");
  CHECK_THROWS_AS(c.set_assignment("dub.guidance"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("dub.nothing=1"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("seed=abc"), ConfigError);

  std::stringstream late("seed 3\npreset paper\n");
  CHECK_THROWS_AS(read_pipeline_config(late), ConfigError);
  std::stringstream bad_window("dub.window 4\ndub.window_step 6\n");
  CHECK_THROWS_AS(read_pipeline_config(bad_window), ConfigError);
  std::stringstream bad_lsd("lsd.unit_vocab 0\n");
  CHECK_THROWS_AS(read_pipeline_config(bad_lsd), ConfigError);

  TempDir dir("config");
  const auto file = dir.path / "c.txt";
  std::ofstream(file) << "preset paper\ndub.guidance 3\n";
  const auto from_file = resolve_pipeline_config(file.string(), "", {"dub.window=12"});
  CHECK(from_file.preset == "paper");
  CHECK(from_file.guidance_scale == 3.0);
  CHECK(from_file.window_size == 12);
  ::setenv(kConfigEnvVar, file.string().c_str(), 1);
  CHECK(resolve_pipeline_config("", "", {}).guidance_scale == 3.0);
  ::setenv(kConfigEnvVar, (dir.path / "missing.txt").string().c_str(), 1);
  CHECK_THROWS_AS(resolve_pipeline_config("", "", {}), ConfigError);
  ::unsetenv(kConfigEnvVar);
  CHECK(resolve_pipeline_config("", "", {}) == desk);
  CHECK(resolve_pipeline_config("", "paper", {}) == paper);
}

TEST_CASE("dub leaves pixels outside the mask untouched") {
  std::mt19937_64 rng(31);
  Denoiser<float> lsd(tiny_lsd(), 5);
  lsd.randomize(6, 0.05);
  Denoiser<float> srd(tiny_srd(), 7);
  srd.randomize(8, 0.05);
  const int T = 20;
  DubRequest req{test::uniform_tensor<float>({T, 8, 8, 3}, rng),
                 test::random_mask(T, 8, 8, rng, 0.3),
                 flat_landmarks(T, rng),
                 random_units(T, 5, rng),
                 random_units(T, 5, rng),
                 test::uniform_tensor<float>({T, 16, 16, 3}, rng),
                 test::random_mask(T, 16, 16, rng, 0.3)};
  const PipelineConfig c = fast_config();
  const DubResult r = cmd_dub(c, lsd, &srd, req);
  CHECK(equal_outside(r.low_res, req.clip, req.mask));
  REQUIRE(r.high_res);
  CHECK(equal_outside(*r.high_res, *req.hr_clip, *req.hr_mask));
  // The masked region actually changed.
  CHECK_FALSE(r.low_res == req.clip);
  CHECK(r.low_res.values().maxCoeff() <= 1.0f);
  CHECK(r.low_res.values().minCoeff() >= -1.0f);

  // Same inputs, same outputs.
  CHECK(cmd_dub(c, lsd, &srd, req).low_res == r.low_res);

  DubRequest none = req;
  none.mask = RegionMask(T, 8, 8);
  none.hr_mask = RegionMask(T, 16, 16);
  const DubResult z = cmd_dub(c, lsd, &srd, none);
  CHECK(z.low_res == req.clip);
  CHECK(*z.high_res == *req.hr_clip);

  DubRequest short_units = req;
  short_units.new_units.units.pop_back();
  CHECK_THROWS_AS(cmd_dub(c, lsd, nullptr, short_units), ArgumentError);
  DubRequest few_landmarks = req;
  few_landmarks.landmarks.pop_back();
  CHECK_THROWS_AS(cmd_dub(c, lsd, nullptr, few_landmarks), ArgumentError);
}

TEST_CASE("srd refinement starts from the noised bicubic upsampling") {
  std::mt19937_64 rng(41);
  Denoiser<float> srd(tiny_srd(), 9);
  srd.randomize(10, 0.05);
  const int T = 5;
  const Clip low = test::uniform_tensor<float>({T, 8, 8, 3}, rng);
  const Clip hr = test::uniform_tensor<float>({T, 16, 16, 3}, rng);
  const RegionMask mask = test::random_mask(T, 16, 16, rng, 0.4);
  DubSettings s = fast_config().dub_settings();

  // Below the second inference step nothing is denoised: the output is the
  // clamped upsampling inside the mask.
  s.srd_start = 1;
  Clip expected = resize_bicubic(low, 16, 16);
  expected.values() = expected.values().cwiseMax(-1.0f).cwiseMin(1.0f);
  CHECK(srd_refine(srd, low, hr, mask, s, 3) == composite(expected, hr, mask));

  s.srd_start = 1000;
  const Clip full = srd_refine(srd, low, hr, mask, s, 3);
  s.srd_start = 500;
  const Clip half = srd_refine(srd, low, hr, mask, s, 3);
  CHECK(equal_outside(full, hr, mask));
  CHECK(equal_outside(half, hr, mask));
  CHECK_FALSE(full == half);
  CHECK(srd_refine(srd, low, hr, mask, s, 3) == half);
}

TEST_CASE("single window equals the plain pipeline and sections continue seamlessly") {
  std::mt19937_64 rng(41);
  Denoiser<float> lsd(tiny_lsd(), 9);
  lsd.randomize(10, 0.05);
  const DubSettings s = fast_config().dub_settings();

  // Eight frames fit one window: stitching must not change a single bit.
  const Clip clip = test::uniform_tensor<float>({8, 8, 8, 3}, rng);
  const Clip ref = test::uniform_tensor<float>({8, 8, 8, 3}, rng);
  const RegionMask mask = test::random_mask(8, 8, 8, rng, 0.4);
  const UnitSequence u0 = random_units(8, 5, rng), u1 = random_units(8, 5, rng);
  const NoisePredictor<float> direct = [&](const Clip& x, int t, const UnitSequence& u) {
    return predict_noise(lsd, concat_channels(x, ref), t, u);
  };
  const auto latent = ddim_invert<float>(direct, clip, mask, u0, s.schedule);
  const Clip plain = ddim_sample<float>(direct, latent, u1, s.schedule, s.guidance);
  CHECK(dub_section(lsd, clip, mask, ref, u0, u1, s) == plain);
  CHECK(invert_section(lsd, clip, mask, ref, u0, s).x == latent.x);

  // 30 frames in sections of 12 with 4 frames of forced overlap.
  const int T = 30;
  const Clip long_clip = test::uniform_tensor<float>({T, 8, 8, 3}, rng);
  const Clip long_ref = test::uniform_tensor<float>({T, 8, 8, 3}, rng);
  const RegionMask long_mask = test::random_mask(T, 8, 8, rng, 0.5);
  const UnitSequence a = random_units(T, 5, rng), b = random_units(T, 5, rng);
  PipelineConfig pc = fast_config();
  const Clip out = dub_clip(lsd, long_clip, long_mask, long_ref, a, b, pc.dub_settings());
  const SectionPlan plan = plan_sections(T, pc.section_length, pc.section_overlap);
  REQUIRE(plan.sections.size() >= 3);

  // Replay every section by hand on the running output.
  Clip replay = long_clip;
  int produced = 0;
  for (const auto& [lo, hi] : plan.sections) {
    RegionMask m = long_mask.slice_frames(lo, hi);
    for (int f = lo; f < std::min(produced, hi); ++f)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) m.set(f - lo, y, x, false);
    const Clip section_out = dub_section(lsd, replay.slice_frames(lo, hi), m, long_ref.slice_frames(lo, hi),
                                         a.slice_frames(lo, hi), b.slice_frames(lo, hi), pc.dub_settings());
    // Overlap frames come out of the new section bit-identical to the frames
    // the previous section produced.
    for (int f = lo; f < std::min(produced, hi); ++f)
      CHECK(section_out.slice_frames(f - lo, f - lo + 1) == replay.slice_frames(f, f + 1));
    replay.set_frames(lo, section_out);
    produced = hi;
  }
  CHECK(replay == out);
}

TEST_CASE("training commands resume and load datasets") {
  TempDir dir("train");
  PipelineConfig c;
  c.synthetic.count = 4;
  c.synthetic.frames = 10;
  c.synthetic.hr_size = 24;
  c.seed = 5;
  cmd_make_synthetic(c, dir.path / "data");
  CHECK(read_dataset_manifest(dir.path / "data").size() == 4);
  const auto samples = load_lsd_dataset(dir.path / "data", 16);
  REQUIRE(samples.size() == 4);
  CHECK(samples[0].reference.shape() == samples[0].clip.shape());
  CHECK_FALSE(samples[0].reference == samples[0].clip);

  c.lsd.base_channels = 4;
  c.lsd.norm_groups = 2;
  c.lsd.time_embed_dim = 8;
  c.lsd_train.batch_size = 2;
  c.checkpoint_every = 2;
  c.lsd_steps = 4;
  const TrainState straight = cmd_train_lsd(c, dir.path / "data", dir.path / "a");
  c.lsd_steps = 2;
  cmd_train_lsd(c, dir.path / "data", dir.path / "b");
  c.lsd_steps = 4;
  const TrainState resumed = cmd_train_lsd(c, dir.path / "data", dir.path / "b");
  CHECK(straight.step == 4);
  CHECK(resumed.step == 4);
  CHECK(straight.model.parameters().values() == resumed.model.parameters().values());
  CHECK(straight.ema == resumed.ema);
  std::ifstream log(dir.path / "b" / "train_log.txt");
  int lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  CHECK(lines == 4);

  c.lsd.base_channels = 8;
  CHECK_THROWS_AS(cmd_train_lsd(c, dir.path / "data", dir.path / "b"), ConfigError);
  CHECK_THROWS_AS(cmd_train_lsd(c, dir.path / "missing", dir.path / "c"), ConfigError);

  c.srd.spatial_size = 24;
  c.srd.base_channels = 4;
  c.srd.norm_groups = 2;
  c.srd.time_embed_dim = 8;
  c.srd_train.batch_size = 1;
  c.srd_steps = 2;
  c.srd_augmentation = {6, 10, 0.05};
  CHECK(cmd_train_srd(c, dir.path / "data", dir.path / "srd").step == 2);
  c.srd.spatial_size = 48;
  CHECK_THROWS_AS(cmd_train_srd(c, dir.path / "data", dir.path / "srd2"), DataError);
}

TEST_CASE("evaluate and curate commands equal direct library calls") {
  TempDir dir("eval");
  PipelineConfig c;
  c.synthetic.count = 3;
  c.synthetic.frames = 20;
  cmd_make_synthetic(c, dir.path / "data");
  // Generated set identical to the originals.
  std::vector<std::string> names;
  for (const auto& s : read_dataset_manifest(dir.path / "data")) {
    const auto name = s.dir.filename().string();
    const SampleFiles g{dir.path / "gen" / name};
    write_clip(g.clip(), read_clip(s.clip()));
    fs::copy_file(s.units(), g.units());
    names.push_back(name);
  }
  write_dataset_manifest(dir.path / "gen", names);
  const MetricReport r = cmd_evaluate(c, dir.path / "data", dir.path / "gen");
  REQUIRE(r.per_video.size() == 3);
  for (const auto& v : r.per_video) {
    CHECK(v.id_p == 0.0);
    CHECK(v.lse_d < 0.05);
  }
  CHECK(r.se_defined);

  write_dataset_manifest(dir.path / "gen", {"sample_99999"});
  CHECK_THROWS_AS(cmd_evaluate(c, dir.path / "data", dir.path / "gen"), ArgumentError);

  // Curation through files equals the library on the same streams.
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> angle(-25, 25);
  std::vector<PoseVideo> videos;
  std::ofstream manifest(dir.path / "poses.txt");
  for (int i = 0; i < 12; ++i) {
    PoseVideo v{"clip" + std::to_string(i), 6.0 + i % 3, {}};
    for (int f = 0; f < 30; ++f) v.frames.emplace_back(PoseFrame{double(angle(rng) / 2), double(angle(rng) / 2), 0.0});
    std::ofstream(dir.path / (v.id + ".pose")) << [&] {
      std::ostringstream os;
      write_pose_stream(os, v);
      return os.str();
    }();
    manifest << v.id << ' ' << v.id << ".pose\n";
    videos.push_back(v);
  }
  manifest << "broken broken.pose\n";
  manifest.close();
  std::ostringstream got, warnings, want;
  cmd_curate(c, CurationMode::front, dir.path / "poses.txt", got, warnings);
  write_low_angle_results(want, select_low_angle(videos, c.low_angle));
  CHECK(got.str() == want.str());
  CHECK(warnings.str().find("broken") != std::string::npos);
  CHECK_THROWS_AS(parse_curation_mode("sideways"), ArgumentError);
  CHECK_THROWS_AS(cmd_curate(c, CurationMode::front, dir.path / "nope.txt", got, warnings), ConfigError);
}
