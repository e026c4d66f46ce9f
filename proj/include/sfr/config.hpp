#pragma once

#include "sfr/fusion.hpp"
#include "sfr/optimizer.hpp"
#include "sfr/render_types.hpp"
#include "sfr/surfel.hpp"
#include "sfr/tracking.hpp"
#include "sfr/tsdf.hpp"

#include <string>

namespace sfr {

// Every tunable in one place, grouped by module, loadable from a sectioned
// key = value file. Unknown keys are hard errors.
struct Config {
  MapConfig map;
  NoiseParams noise;
  RenderOptions render;
  LossWeights loss;
  OptimizerConfig optimizer;
  TrackerConfig tracker;
  MeshingConfig meshing;

  struct Run {
    std::uint64_t seed = 7;
    int threads = 0;  // 0: SFR_THREADS or hardware
    int pyramid_levels = 3;
    bool bilateral_filter = true;
    double tau_conf = 0.0;        // confidence threshold for exports
    int eval_sample_points = 1000000;
    int optimize_every_keyframes = 1;
  } run;

  void validate() const;
};

Config load_config(const std::string& path);
void save_config(const Config& cfg, const std::string& path);

// Applies "section.key=value" overrides (the CLI's --set).
void apply_override(Config& cfg, const std::string& spec);

}  // namespace sfr
