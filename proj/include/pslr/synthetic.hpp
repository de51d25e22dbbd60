#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pslr/pose_data.hpp"

namespace pslr {

// Desk-scale stand-in for a real sign corpus: each class is a distinct
// parametric motion template (smooth wrist trajectories plus a per-class hand
// shape); samples add temporal warping and coordinate noise.
struct SyntheticSpec {
  std::size_t n_classes = 0;
  std::vector<std::size_t> samples_per_class;  // length n_classes
  std::size_t t_min = 40;
  std::size_t t_max = 70;
  double noise_scale = 6.0;  // coordinate noise stddev, pixels
  std::uint64_t seed = 1;

  // Class templates derive from `seed`; per-sample draws derive from
  // `sample_seed` (0 means: use `seed`). Two datasets generated with the same
  // seed but different sample_seed share templates - the cross-domain setup.
  std::uint64_t sample_seed = 0;

  double offset_x = 0.0;  // uniform screen displacement (domain knob)
  double offset_y = 0.0;
  double coord_scale = 1.0;
  double conf_dropout = 0.03;  // chance a joint-frame falls below the gate
  double fps = 25.0;

  double train_frac = 0.6;
  double val_frac = 0.2;  // remainder is test
};

// Builds one raw keypoint sequence (no files); deterministic in the spec.
KeypointSequence synthesize_sequence(const SyntheticSpec& spec, std::size_t class_index,
                                     std::size_t sample_index);

// Writes one file per sample plus manifest.tsv under out_dir and returns the
// manifest. Deterministic: same spec -> byte-identical tree.
DatasetManifest generate_synthetic_dataset(const SyntheticSpec& spec,
                                           const std::filesystem::path& out_dir);

}  // namespace pslr
