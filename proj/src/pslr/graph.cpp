#include "pslr/graph.hpp"

#include <cmath>
#include <queue>

#include "pslr/errors.hpp"

namespace pslr {

bool SkeletonGraph::connected() const {
  if (num_joints == 0) return false;
  std::vector<char> seen(num_joints, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  std::vector<std::vector<int>> adj(num_joints);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::size_t count = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == num_joints;
}

SkeletonGraph make_graph(std::string name, std::size_t num_joints,
                         std::vector<std::pair<int, int>> edges) {
  SkeletonGraph g;
  g.partition_name = std::move(name);
  g.num_joints = num_joints;
  g.edges = std::move(edges);
  for (auto [a, b] : g.edges) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= num_joints ||
        static_cast<std::size_t>(b) >= num_joints || a == b) {
      throw DataError("graph '" + g.partition_name + "' has invalid edge (" + std::to_string(a) +
                      ", " + std::to_string(b) + ")");
    }
  }

  Mat a_plus_i(num_joints, num_joints);
  for (std::size_t i = 0; i < num_joints; ++i) a_plus_i(i, i) = 1.0;
  for (auto [a, b] : g.edges) {
    a_plus_i(a, b) = 1.0;
    a_plus_i(b, a) = 1.0;
  }
  std::vector<double> inv_sqrt_deg(num_joints);
  for (std::size_t i = 0; i < num_joints; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < num_joints; ++j) deg += a_plus_i(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  g.adjacency.resize(num_joints, num_joints);
  for (std::size_t i = 0; i < num_joints; ++i) {
    for (std::size_t j = 0; j < num_joints; ++j) {
      g.adjacency(i, j) = inv_sqrt_deg[i] * a_plus_i(i, j) * inv_sqrt_deg[j];
    }
  }
  return g;
}

namespace {

std::vector<std::pair<int, int>> chain(int lo, int hi) {
  std::vector<std::pair<int, int>> e;
  for (int i = lo; i < hi; ++i) e.emplace_back(i, i + 1);
  return e;
}

std::vector<std::pair<int, int>> ring(int lo, int hi) {
  auto e = chain(lo, hi);
  e.emplace_back(hi, lo);
  return e;
}

void append(std::vector<std::pair<int, int>>& dst, std::vector<std::pair<int, int>> src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

SkeletonGraph build_partition_graph(const PartitionSpec& spec) {
  std::vector<std::pair<int, int>> edges;
  switch (spec.id) {
    case PartitionId::body: {
      // Rows: nose 0, shoulders 1/2, elbows 3/4, wrists 5/6, neck 7, mid-hip 8.
      edges = {{7, 1}, {7, 2}, {1, 3}, {2, 4}, {3, 5}, {4, 6}, {0, 7}, {7, 8}};
      break;
    }
    case PartitionId::left_hand:
    case PartitionId::right_hand: {
      // Wrist at row 0, then five finger chains of four joints each.
      for (int f = 0; f < 5; ++f) {
        const int base = 1 + f * 4;
        edges.emplace_back(0, base);
        append(edges, chain(base, base + 3));
      }
      break;
    }
    case PartitionId::face: {
      // 68-landmark contours plus bridges that keep the graph connected.
      append(edges, chain(0, 16));    // jawline
      append(edges, chain(17, 21));   // right eyebrow
      append(edges, chain(22, 26));   // left eyebrow
      append(edges, chain(27, 30));   // nose bridge
      append(edges, chain(31, 35));   // nose base
      append(edges, ring(36, 41));    // right eye
      append(edges, ring(42, 47));    // left eye
      append(edges, ring(48, 59));    // outer lip
      append(edges, ring(60, 67));    // inner lip
      edges.emplace_back(0, 17);      // jaw start to right brow
      edges.emplace_back(16, 26);     // jaw end to left brow
      edges.emplace_back(21, 27);     // brows to nose bridge
      edges.emplace_back(22, 27);
      edges.emplace_back(39, 27);     // inner eye corners to bridge
      edges.emplace_back(42, 27);
      edges.emplace_back(30, 33);     // bridge to nose base
      edges.emplace_back(33, 51);     // nose base to upper lip
      edges.emplace_back(48, 60);     // lip corners
      edges.emplace_back(54, 64);
      break;
    }
    default:
      throw DataError("unknown partition '" + spec.name + "'");
  }
  SkeletonGraph g = make_graph(spec.name, spec.output_joints(), std::move(edges));
  if (!g.connected()) {
    throw DataError("partition graph '" + spec.name + "' is not connected");
  }
  return g;
}

std::vector<SkeletonGraph> canonical_graphs() {
  std::vector<SkeletonGraph> out;
  for (const PartitionSpec& spec : canonical_partitions()) {
    out.push_back(build_partition_graph(spec));
  }
  return out;
}

}  // namespace pslr
