#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pslr/keypoints.hpp"
#include "pslr/mat.hpp"

namespace pslr {

// Skeleton topology of one partition with its symmetrically normalized
// adjacency: A_hat = D^{-1/2} (A + I) D^{-1/2}.
struct SkeletonGraph {
  std::string partition_name;
  std::size_t num_joints = 0;
  std::vector<std::pair<int, int>> edges;  // undirected bone connections
  Mat adjacency;                           // (J, J), symmetric, entries in [0, 1]

  bool connected() const;
};

// Builds a graph from an explicit edge list (used for reduced test configs).
SkeletonGraph make_graph(std::string name, std::size_t num_joints,
                         std::vector<std::pair<int, int>> edges);

// Canonical topology for one of the four partitions: hand tree (wrist to four
// joints per finger), body chain, or the 68-landmark face contours bridged
// into one connected component.
SkeletonGraph build_partition_graph(const PartitionSpec& spec);

// Graphs for all canonical partitions, in canonical order.
std::vector<SkeletonGraph> canonical_graphs();

}  // namespace pslr
