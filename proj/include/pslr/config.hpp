#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pslr/encoder.hpp"
#include "pslr/prototypical.hpp"

namespace pslr {

// Plain-text key-value configuration with [section] headers. Unknown keys are
// rejected so typos fail fast. Defaults follow the training protocol of the
// full-scale setup (N = 200, K = 3, Q = 2, 50,000 episodes, D = 768, tau =
// 0.3, speed factors {0.8, 1.0, 1.25}, baseline 50 epochs).
struct RunConfig {
  // [paths]
  std::string manifest;
  std::string out_dir;
  std::string checkpoint;         // model input for eval-type commands
  std::string target_manifest;    // eval-cross query side
  std::string predictions;        // existing predictions.csv for cmd_confusions

  // [model]
  std::string plan_name = "paper";  // paper | desk
  std::size_t embedding_dim = 0;    // 0 -> preset default
  std::size_t frames = 64;
  std::size_t temporal_kernel = 0;  // 0 -> preset default
  DistanceMode distance = DistanceMode::squared;
  std::vector<std::size_t> limb_channels;  // output widths per block; empty -> preset
  std::vector<std::size_t> face_channels;

  // [episodes]
  std::size_t n_way = 200;
  std::size_t k_shot = 3;
  std::size_t q_query = 2;
  std::size_t episodes = 50000;

  // [optimizer]
  AdamOptions adam;

  // [augmentation]
  bool augment = true;
  std::vector<double> speed_factors = {0.8, 1.0, 1.25};

  // [data]
  double tau = 0.3;
  std::size_t classes = 10;
  std::size_t samples_per_class = 20;
  std::vector<std::size_t> counts;  // explicit per-class list wins
  std::string shape = "uniform";    // uniform | geometric
  std::size_t head_count = 20;
  std::size_t tail_count = 4;
  std::size_t t_min = 40;
  std::size_t t_max = 70;
  double noise = 6.0;
  std::uint64_t template_seed = 0;  // 0 -> run seed
  std::uint64_t sample_seed = 0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  double coord_scale = 1.0;
  double conf_dropout = 0.03;
  double train_frac = 0.6;
  double val_frac = 0.2;

  // [eval]
  std::vector<std::size_t> k_list = {1, 5, 10};
  std::size_t val_interval = 1000;
  std::string eval_split = "test";
  std::string source_split = "train";
  std::string target_split = "test";
  std::size_t confusion_top_m = 15;
  bool render = false;  // cmd_project: also emit an SVG scatter

  // [baseline]
  std::size_t baseline_epochs = 50;
  std::size_t baseline_batch = 32;
  double baseline_lr = 1e-3;

  // [run]
  std::uint64_t seed = 1;
  int threads = 1;

  ModelPlan make_plan() const;
  void validate() const;

  static RunConfig load(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides = {});
  // Parses from pre-split section/key/value entries (tests use this).
  static RunConfig from_map(const std::map<std::string, std::string>& kv);
  // Round-trippable dump of every effective value.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
};

}  // namespace pslr
