#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>

#include "edidub/commands.hpp"
#include "edidub/io.hpp"

using namespace edidub;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  PipelineConfig resolve(std::vector<std::string> extra = {}) const {
    std::vector<std::string> all = overrides;
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    all.insert(all.end(), extra.begin(), extra.end());
    return resolve_pipeline_config(config_path, preset, all);
  }
};

void print_report(const MetricReport& r) {
  auto line = [&](const char* name, const MeanSe& m) {
    std::cout << name << ' ' << m.mean;
    if (r.se_defined) std::cout << " +- " << m.se;
    std::cout << '\n';
  };
  std::cout << "videos " << r.per_video.size() << (r.se_defined ? "" : " (standard error undefined)") << '\n';
  line("lse_d", r.lse_d);
  line("lse_c", r.lse_c);
  line("id_p", r.id_p);
  line("id_tc", r.id_tc);
}

PixelBox parse_box(const std::vector<int>& v) {
  if (v.size() != 4) throw ArgumentError("--box expects x,y,width,height");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual dubbing with masked video diffusion: training, dubbing, evaluation and curation tools."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, std::string("Configuration file (default: $") + kConfigEnvVar + ")");
  app.add_option("--preset", g.preset, "Built-in preset applied before the file: desk or paper");
  app.add_option("--set", g.overrides, "Override a configuration key, e.g. --set dub.guidance=3")->take_all();
  app.add_option("--seed", g.seed, "Shorthand for --set seed=N");

  std::function<void()> run;

  // make-synthetic -----------------------------------------------------------
  auto* synth = app.add_subcommand("make-synthetic", "Render a talking-blob dataset");
  std::string synth_out;
  std::optional<int> synth_count, synth_hr;
  synth->add_option("--out", synth_out, "Dataset root")->required();
  synth->add_option("--count", synth_count, "Number of samples");
  synth->add_option("--hr-size", synth_hr, "Also render at this resolution (0: off)");
  synth->callback([&] {
    run = [&] {
      std::vector<std::string> extra;
      if (synth_count) extra.push_back("synthetic.count=" + std::to_string(*synth_count));
      if (synth_hr) extra.push_back("synthetic.hr_size=" + std::to_string(*synth_hr));
      const auto c = g.resolve(extra);
      cmd_make_synthetic(c, synth_out);
      std::cout << "wrote " << c.synthetic.count << " samples to " << synth_out << '\n';
    };
  });

  // train-lsd / train-srd ----------------------------------------------------
  std::string train_data, train_ckpt;
  std::optional<long> train_steps;
  for (const bool is_lsd : {true, false}) {
    auto* sub = app.add_subcommand(is_lsd ? "train-lsd" : "train-srd",
                                   is_lsd ? "Train the lip-sync denoiser (resumes from --checkpoint)"
                                          : "Train the super-resolution denoiser (resumes from --checkpoint)");
    sub->add_option("--data", train_data, "Dataset root holding dataset.txt")->required();
    sub->add_option("--checkpoint", train_ckpt, "Checkpoint directory")->required();
    sub->add_option("--steps", train_steps, "Train until this step");
    sub->callback([&, is_lsd] {
      run = [&, is_lsd] {
        std::vector<std::string> extra;
        if (train_steps) extra.push_back(std::string(is_lsd ? "lsd" : "srd") + "_train.steps=" + std::to_string(*train_steps));
        const auto c = g.resolve(extra);
        const TrainState s = is_lsd ? cmd_train_lsd(c, train_data, train_ckpt) : cmd_train_srd(c, train_data, train_ckpt);
        std::cout << "checkpoint at step " << s.step << " in " << train_ckpt << '\n';
      };
    });
  }

  // dub -----------------------------------------------------------------------
  auto* dub = app.add_subcommand("dub", "Re-synthesize the masked region to follow new speech units");
  struct {
    std::string lsd, srd, clip, mask, landmarks, units, new_units, out, hr_clip, hr_mask, hr_out;
  } d;
  dub->add_option("--lsd", d.lsd, "LSD checkpoint directory")->required();
  dub->add_option("--clip", d.clip, "Input clip directory")->required();
  dub->add_option("--mask", d.mask, "Editable-region mask file")->required();
  dub->add_option("--landmarks", d.landmarks, "Landmark file (reference selection)")->required();
  dub->add_option("--units", d.units, "Original speech units")->required();
  dub->add_option("--new-units", d.new_units, "Target speech units")->required();
  dub->add_option("--out", d.out, "Output clip directory (low resolution)")->required();
  dub->add_option("--srd", d.srd, "SRD checkpoint directory");
  dub->add_option("--hr-clip", d.hr_clip, "High-resolution input clip");
  dub->add_option("--hr-mask", d.hr_mask, "High-resolution mask");
  dub->add_option("--hr-out", d.hr_out, "High-resolution output clip directory");
  dub->callback([&] {
    run = [&] {
      const auto c = g.resolve();
      const Denoiser<float> lsd = load_inference_model(d.lsd);
      const int vocab = lsd.config().unit_vocab;
      DubRequest req{read_clip(d.clip), read_mask(d.mask), read_landmarks_file(d.landmarks, kBlobLipIndices),
                     read_units_file(d.units, vocab), read_units_file(d.new_units, vocab), std::nullopt, std::nullopt};
      std::optional<Denoiser<float>> srd;
      if (!d.srd.empty()) {
        if (d.hr_clip.empty() || d.hr_mask.empty() || d.hr_out.empty())
          throw ArgumentError("--srd needs --hr-clip, --hr-mask and --hr-out");
        srd = load_inference_model(d.srd);
        req.hr_clip = read_clip(d.hr_clip);
        req.hr_mask = read_mask(d.hr_mask);
      }
      const DubResult r = cmd_dub(c, lsd, srd ? &*srd : nullptr, req);
      write_clip(d.out, r.low_res);
      if (r.high_res) write_clip(d.hr_out, *r.high_res);
      std::cout << "dubbed " << req.clip.frames() << " frames at " << r.frames_per_second << " frames/s\n";
    };
  });

  // invert --------------------------------------------------------------------
  auto* inv = app.add_subcommand("invert", "Deterministically invert a clip to its latent");
  struct {
    std::string lsd, clip, mask, landmarks, units, out;
  } iv;
  inv->add_option("--lsd", iv.lsd, "LSD checkpoint directory")->required();
  inv->add_option("--clip", iv.clip, "Input clip directory")->required();
  inv->add_option("--mask", iv.mask, "Editable-region mask file")->required();
  inv->add_option("--landmarks", iv.landmarks, "Landmark file")->required();
  inv->add_option("--units", iv.units, "Speech units of the clip")->required();
  inv->add_option("--out", iv.out, "Latent clip directory (plus latent.txt with the timestep)")->required();
  inv->callback([&] {
    run = [&] {
      const auto c = g.resolve();
      const Denoiser<float> lsd = load_inference_model(iv.lsd);
      const auto state = cmd_invert(c, lsd, read_clip(iv.clip), read_mask(iv.mask),
                                    read_landmarks_file(iv.landmarks, kBlobLipIndices),
                                    read_units_file(iv.units, lsd.config().unit_vocab));
      write_clip(iv.out, state.x);
      std::ofstream(fs::path(iv.out) / "latent.txt") << "t " << state.t << '\n';
      std::cout << "latent at t=" << state.t << " written to " << iv.out << '\n';
    };
  });

  // evaluate ------------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "Compute LSE-D, LSE-C, ID-P and ID-TC for generated clips");
  std::string ev_orig, ev_gen, ev_out, ev_embedder = "synthetic";
  ev->add_option("--original", ev_orig, "Dataset root with the original samples")->required();
  ev->add_option("--generated", ev_gen, "Dataset root with the generated samples")->required();
  ev->add_option("--out", ev_out, "Report prefix: writes <prefix>.tsv and <prefix>.txt")->required();
  ev->add_option("--embedder", ev_embedder, "Embedding provider")->check(CLI::IsMember({"synthetic"}));
  ev->callback([&] {
    run = [&] {
      const auto report = cmd_evaluate(g.resolve(), ev_orig, ev_gen);
      std::ofstream table(ev_out + ".tsv"), summary(ev_out + ".txt");
      write_report_table(table, report);
      write_report_summary(summary, report);
      if (!table || !summary) throw DataError("cannot write report " + ev_out);
      print_report(report);
    };
  });

  // curate --------------------------------------------------------------------
  auto* cu = app.add_subcommand("curate", "Select benchmark videos from landmark or pose streams");
  std::string cu_mode, cu_manifest, cu_out;
  cu->add_option("--mode", cu_mode, "front or occluded")->required()->check(CLI::IsMember({"front", "occluded"}));
  cu->add_option("--manifest", cu_manifest, "Lines of '<id> <stream file>'")->required();
  cu->add_option("--out", cu_out, "Output table (default: standard output)");
  cu->callback([&] {
    run = [&] {
      const auto c = g.resolve();
      if (cu_out.empty()) {
        cmd_curate(c, parse_curation_mode(cu_mode), cu_manifest, std::cout, std::cerr);
      } else {
        std::ofstream os(cu_out);
        if (!os) throw DataError("cannot write " + cu_out);
        cmd_curate(c, parse_curation_mode(cu_mode), cu_manifest, os, std::cerr);
      }
    };
  });

  // corrupt -------------------------------------------------------------------
  auto* co = app.add_subcommand("corrupt", "Make an out-of-sync control clip");
  std::string co_clip, co_out;
  std::vector<int> co_box;
  co->add_option("--clip", co_clip, "Input clip directory")->required();
  co->add_option("--box", co_box, "Mouth box x,y,width,height in pixels")->required()->delimiter(',')->expected(4);
  co->add_option("--out", co_out, "Output clip directory")->required();
  co->callback([&] {
    run = [&] {
      const auto c = g.resolve();
      write_clip(co_out, corrupt_clip(read_clip(co_clip), parse_box(co_box), c.seed));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    run();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << '\n';
    return kExitContract;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << '\n';
    return kExitArgument;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
