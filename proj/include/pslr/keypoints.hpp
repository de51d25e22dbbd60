#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace pslr {

// COCO-WholeBody layout: 17 body, 6 feet, 68 face, 21 left hand, 21 right hand.
inline constexpr std::size_t kNumJoints = 133;

namespace joint {
inline constexpr int kNose = 0;
inline constexpr int kLeftShoulder = 5;
inline constexpr int kRightShoulder = 6;
inline constexpr int kLeftElbow = 7;
inline constexpr int kRightElbow = 8;
inline constexpr int kLeftWrist = 9;
inline constexpr int kRightWrist = 10;
inline constexpr int kLeftHip = 11;
inline constexpr int kRightHip = 12;
inline constexpr int kFaceStart = 23;   // 68 landmarks, 23..90
inline constexpr int kFaceNoseTip = 53; // landmark 30 of the 68-point layout
inline constexpr int kLeftHandRoot = 91;   // duplicate of the body wrist; unused
inline constexpr int kLeftFingerStart = 92;   // 20 finger joints, 92..111
inline constexpr int kRightHandRoot = 112;
inline constexpr int kRightFingerStart = 113;  // 113..132
}  // namespace joint

enum class PartitionId : int { body = 0, left_hand = 1, right_hand = 2, face = 3 };
inline constexpr std::size_t kNumPartitions = 4;

const char* partition_name(PartitionId id);

struct PartitionSpec {
  PartitionId id;
  std::string name;
  // Indices into the 133-joint layout, in output-row order. The body
  // partition additionally gets a synthesized neck (shoulder midpoint) and
  // mid-hip appended by partitioning, so its output has two more rows than
  // joint_indices.
  std::vector<int> joint_indices;
  std::optional<int> anchor_index;  // 133-space; wrist for hands, nose tip for face

  std::size_t output_joints() const {
    return joint_indices.size() + (id == PartitionId::body ? 2 : 0);
  }
  // Row of the anchor within the partition output, if any.
  std::optional<std::size_t> anchor_row() const;
};

// The four canonical partitions (body, left_hand, right_hand, face), in that
// order. Hand partitions are anchored at the body wrists; the duplicate
// hand-root keypoints and the feet are ingested but not assigned to any
// partition.
const std::vector<PartitionSpec>& canonical_partitions();

}  // namespace pslr
