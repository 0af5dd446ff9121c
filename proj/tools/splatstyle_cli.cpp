#include "splatstyle/config.hpp"
#include "splatstyle/error.hpp"
#include "splatstyle/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> snapshot_every;
};

splatstyle::StylizeConfig load_config(const Common& common) {
  fs::path path = common.config;
  if (path.empty()) {
    const auto env = splatstyle::default_config_path();
    if (!env)
      throw splatstyle::ValidationError(std::string("no config given: pass --config or set ") + splatstyle::kConfigEnvVar);
    path = *env;
  }
  splatstyle::RunOptions overrides;
  if (!common.out.empty()) overrides.output = common.out;
  overrides.seed = common.seed;
  overrides.snapshot_every = common.snapshot_every;
  return splatstyle::apply_overrides(splatstyle::StylizeConfig::load(path), overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style transfer for Gaussian-splat scenes"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  Common common;
  auto add_pipeline_flags = [&](CLI::App* cmd, bool snapshots) {
    cmd->add_option("-c,--config", common.config, "Config file (default: $SPLATSTYLE_CONFIG)");
    cmd->add_option("-o,--out", common.out, "Output directory (overrides the config)");
    cmd->add_option("--seed", common.seed, "Random seed (overrides the config)");
    if (snapshots) cmd->add_option("--snapshot-every", common.snapshot_every, "Write a snapshot render every N steps");
  };

  auto* match = app.add_subcommand("match", "Label Gaussians and isolate style regions");
  add_pipeline_flags(match, false);
  auto* recolor = app.add_subcommand("recolor", "Color-match groups and retrain the scene");
  add_pipeline_flags(recolor, false);
  auto* stylize = app.add_subcommand("stylize", "Run the stylization stage");
  add_pipeline_flags(stylize, true);

  std::string scene, cameras, render_out;
  auto* render = app.add_subcommand("render", "Render a scene to PNG and depth maps");
  render->add_option("--scene", scene, "Scene (.ply or .json)")->required();
  render->add_option("--cameras", cameras, "Camera file")->required();
  render->add_option("-o,--out", render_out, "Output directory")->required();

  std::string rendered_dir, reference_dir, metrics;
  auto* eval = app.add_subcommand("eval", "SSIM between rendered and reference views");
  eval->add_option("--rendered", rendered_dir, "Folder of rendered PNGs")->required();
  eval->add_option("--reference", reference_dir, "Folder of reference PNGs")->required();
  eval->add_option("-o,--out", metrics, "Metrics JSON path (default: <rendered>/metrics.json)");

  std::string toy_out;
  std::uint64_t toy_seed = 7;
  auto* toy = app.add_subcommand("toy", "Write the bundled toy scene, styles and configs");
  toy->add_option("-o,--out", toy_out, "Output directory")->required();
  toy->add_option("--seed", toy_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (match->parsed()) splatstyle::cmd_match(load_config(common));
    else if (recolor->parsed()) splatstyle::cmd_recolor(load_config(common));
    else if (stylize->parsed()) splatstyle::cmd_stylize(load_config(common));
    else if (render->parsed()) splatstyle::cmd_render(scene, cameras, render_out);
    else if (eval->parsed()) {
      const fs::path out = metrics.empty() ? fs::path(rendered_dir) / "metrics.json" : fs::path(metrics);
      const auto r = splatstyle::cmd_eval(rendered_dir, reference_dir, out);
      std::cout << "mean SSIM " << r.mean_ssim << " over " << r.ssim.size() << " view(s)\n";
    } else if (toy->parsed()) {
      splatstyle::cmd_toy(toy_out, toy_seed);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return splatstyle::exit_code_for(e);
  }
  return 0;
}
