// Command-line front end: synth, densify, train, eval, mesh, visualize, pipeline.
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "tissuedef/config.hpp"
#include "tissuedef/error.hpp"
#include "tissuedef/pipeline.hpp"

using namespace tissuedef;

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumeric = 2, kIo = 3 };

void log_line(const std::string& s) {
  std::fputs(s.c_str(), stderr);
  if (s.empty() || s.back() != '\n') std::fputc('\n', stderr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Track-conditioned deformation fields for deformable tissue: synthesis, training and evaluation"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path, out, scene, tracks, checkpoint, split = "heldout";
  std::optional<std::uint64_t> seed;
  std::optional<double> ablate;
  std::optional<int> frame, iterations;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "RNG seed (overrides the config)");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_option("--ablate", ablate, "probability of clearing the reference point input during training")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--scene", scene, "scene directory");
  app.add_option("--tracks", tracks, "track file, or 'oracle'");
  app.add_option("--checkpoint", checkpoint, "checkpoint directory");
  app.add_option("--iterations", iterations, "training iterations");

  const char* names[] = {"synth", "densify", "train", "eval", "mesh", "visualize", "pipeline"};
  const char* help[] = {"generate a synthetic bump scene with ground truth and oracle tracks",
                        "densify a track file into per-frame displacement fields",
                        "train the deformation, SDF and radiance fields",
                        "evaluate a checkpoint and write report.json",
                        "extract canonical and posed meshes",
                        "write a color-encoded deformation mesh and a 2D heatmap",
                        "run every stage in sequence"};
  std::map<std::string, CLI::App*> subs;
  for (int i = 0; i < 7; ++i) subs[names[i]] = app.add_subcommand(names[i], help[i]);
  subs["eval"]->add_option("--split", split, "heldout, train or all");
  subs["visualize"]->add_option("--frame", frame, "frame index");
  subs["mesh"]->add_option("--frame", frame, "frame index for the posed mesh");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
      cfg.synthetic.texture_seed = *seed;
    }
    if (!out.empty()) cfg.output = out;
    if (ablate) cfg.train.p_clear = *ablate;
    if (!scene.empty()) cfg.scene = scene;
    if (!tracks.empty()) cfg.tracks = tracks;
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    if (iterations) cfg.train.iterations = *iterations;
    if (frame) cfg.visualize_frame = *frame;
    cfg.validate();
    cfg.check_paths(command);

    if (command == "synth") cmd_synth(cfg, log_line);
    else if (command == "densify") cmd_densify(cfg, log_line);
    else if (command == "train") cmd_train(cfg, log_line);
    else if (command == "eval") cmd_eval(cfg, split, log_line);
    else if (command == "mesh") cmd_mesh(cfg, log_line);
    else if (command == "visualize") cmd_visualize(cfg, log_line);
    else cmd_pipeline(cfg, log_line);
  } catch (const ConfigError& e) {
    log_line(std::string("error: ") + e.what());
    return kConfig;
  } catch (const NumericError& e) {
    log_line(std::string("numeric error: ") + e.what());
    return kNumeric;
  } catch (const IoError& e) {
    log_line(std::string("i/o error: ") + e.what());
    return kIo;
  } catch (const FormatError& e) {
    log_line(std::string("i/o error: ") + e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    log_line(std::string("i/o error: ") + e.what());
    return kIo;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return kConfig;
  }
  return kOk;
}
