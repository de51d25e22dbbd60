#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pslr/keypoints.hpp"

namespace pslr {

// Raw per-video whole-body keypoints, (T, 133, 3) with (x px, y px, confidence).
struct KeypointSequence {
  std::string video_id;
  std::string gloss;
  std::size_t num_frames = 0;
  double fps = 25.0;
  std::vector<float> data;  // T * 133 * 3, row-major over (t, joint)

  float x(std::size_t t, std::size_t j) const { return data[(t * kNumJoints + j) * 3 + 0]; }
  float y(std::size_t t, std::size_t j) const { return data[(t * kNumJoints + j) * 3 + 1]; }
  float conf(std::size_t t, std::size_t j) const { return data[(t * kNumJoints + j) * 3 + 2]; }
  float* joint(std::size_t t, std::size_t j) { return &data[(t * kNumJoints + j) * 3]; }

  void validate() const;  // throws DataError on malformed shape/confidence
};

// One partition of a single frame: gathered coordinates and confidences.
struct FramePartition {
  PartitionId id;
  std::vector<double> coords;  // J_p * 2
  std::vector<double> conf;    // J_p
  std::size_t joints() const { return conf.size(); }
};

// Gather one 133x3 frame into the given partitions. Synthesizes the body
// neck (shoulder midpoint, confidence = min of the shoulders) and mid-hip.
std::vector<FramePartition> partition_keypoints(std::span<const float> frame,
                                                const std::vector<PartitionSpec>& specs);

// Partitioned, normalized, confidence-gated coordinates for one video.
struct PartitionBlock {
  std::size_t joints = 0;
  std::vector<float> coords;  // T * J_p * 2
  std::vector<float> mask;    // T * J_p, 0 or 1
};

struct NormalizedSample {
  std::string video_id;
  std::string gloss;
  std::size_t num_frames = 0;
  std::array<PartitionBlock, kNumPartitions> parts;  // canonical order
};

// Three-stage normalization: one body box per video mapped to [-1,1] by the
// longer side, wrist/nose-tip relative centering for hands/face, then
// confidence gating at tau (joints with original confidence < tau get
// coordinates (0,0) and mask 0).
NormalizedSample normalize_sequence(const KeypointSequence& seq,
                                    const std::vector<PartitionSpec>& specs, double tau);

// Playback-speed change: output length round(T/factor), linear interpolation
// along time; interpolated masks are the AND of the bracketing frames.
NormalizedSample speed_augment(const NormalizedSample& sample, double factor);

NormalizedSample resample_to_length(const NormalizedSample& sample, std::size_t t_target);

// --- sample files (binary, little-endian; see read_sample for the layout) ---

using SampleVariant = std::variant<KeypointSequence, NormalizedSample>;

void write_sample(const std::filesystem::path& path, const KeypointSequence& seq);
void write_sample(const std::filesystem::path& path, const NormalizedSample& sample);
SampleVariant read_sample(const std::filesystem::path& path);

// --- dataset manifest ---

enum class Split { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string video_id;
  std::string gloss;
  Split split;
  std::string path;  // relative to the manifest file's directory
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> gloss_vocabulary;  // distinct, lexicographic
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
  void rebuild_vocabulary();
  void validate() const;  // unique ids, resolvable paths

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// Loads a sample file and returns it in normalized form, running
// normalize_sequence with the canonical partitions when the file holds raw
// keypoints.
NormalizedSample load_normalized(const std::filesystem::path& path, double tau);

}  // namespace pslr
