#include "pslr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pslr/errors.hpp"

namespace pslr {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

using json = nlohmann::json;

void write_doubles(std::ostream& os, const double* src, std::size_t count) {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &src[i], 8);
      unsigned char b[8];
      for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
      os.write(reinterpret_cast<const char*>(b), 8);
    }
  }
}

void read_doubles(std::istream& is, double* dst, std::size_t count,
                  const std::filesystem::path& path) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * 8));
  if (static_cast<std::size_t>(is.gcount()) != count * 8) {
    throw DataError("truncated payload in checkpoint '" + path.string() + "'");
  }
  if constexpr (std::endian::native == std::endian::big) {
    auto* bytes = reinterpret_cast<unsigned char*>(dst);
    for (std::size_t i = 0; i < count; ++i) {
      for (int k = 0; k < 4; ++k) std::swap(bytes[i * 8 + k], bytes[i * 8 + 7 - k]);
    }
  }
}

json plan_to_json(const ModelPlan& plan) {
  json j;
  j["embedding_dim"] = plan.embedding_dim;
  j["frames"] = plan.frames;
  j["temporal_kernel"] = plan.temporal_kernel;
  json parts = json::array();
  for (const auto& p : plan.partitions) {
    json blocks = json::array();
    for (const auto& b : p.blocks) blocks.push_back({b.in_ch, b.out_ch});
    parts.push_back(blocks);
  }
  j["partitions"] = parts;
  return j;
}

ModelPlan plan_from_json(const json& j) {
  ModelPlan plan;
  plan.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  plan.frames = j.at("frames").get<std::size_t>();
  plan.temporal_kernel = j.at("temporal_kernel").get<std::size_t>();
  for (const auto& pj : j.at("partitions")) {
    PartitionPlan pp;
    for (const auto& bj : pj) {
      pp.blocks.push_back({bj.at(0).get<std::size_t>(), bj.at(1).get<std::size_t>()});
    }
    plan.partitions.push_back(std::move(pp));
  }
  return plan;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& model,
                     const AdamState* adam, const TrainingMeta* meta,
                     const std::vector<std::string>* vocabulary) {
  json header;
  header["format"] = "pslr-checkpoint";
  header["version"] = kVersion;
  header["plan"] = plan_to_json(model.plan);

  json graphs = json::array();
  for (const SkeletonGraph& g : model.graphs) {
    json gj;
    gj["name"] = g.partition_name;
    gj["joints"] = g.num_joints;
    json edges = json::array();
    for (auto [a, b] : g.edges) edges.push_back({a, b});
    gj["edges"] = edges;
    graphs.push_back(gj);
  }
  header["graphs"] = graphs;

  json arrays = json::array();
  for (const ParamInfo& pi : model.params.infos()) {
    arrays.push_back({{"name", pi.name},
                      {"rows", pi.rows},
                      {"cols", pi.cols},
                      {"dtype", "f64"},
                      {"offset", pi.offset}});
  }
  header["params"] = arrays;

  if (adam != nullptr) {
    header["adam"] = {{"t", adam->t},
                      {"lr", adam->opts.lr},
                      {"beta1", adam->opts.beta1},
                      {"beta2", adam->opts.beta2},
                      {"eps", adam->opts.eps}};
  }
  if (meta != nullptr) {
    header["meta"] = {{"episodes_done", meta->episodes_done},
                      {"best_val_top1", meta->best_val_top1},
                      {"note", meta->note}};
  }
  if (vocabulary != nullptr) header["vocabulary"] = *vocabulary;

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  unsigned char vb[4] = {static_cast<unsigned char>(version),
                         static_cast<unsigned char>(version >> 8),
                         static_cast<unsigned char>(version >> 16),
                         static_cast<unsigned char>(version >> 24)};
  out.write(reinterpret_cast<const char*>(vb), 4);
  const std::uint64_t hlen = header_text.size();
  unsigned char hb[8];
  for (int k = 0; k < 8; ++k) hb[k] = static_cast<unsigned char>(hlen >> (8 * k));
  out.write(reinterpret_cast<const char*>(hb), 8);
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  write_doubles(out, model.params.values().data(), model.params.total());
  if (adam != nullptr) {
    write_doubles(out, adam->m.data(), adam->m.size());
    write_doubles(out, adam->v.data(), adam->v.size());
  }
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("bad magic in checkpoint '" + path.string() + "'");
  }
  unsigned char vb[4];
  in.read(reinterpret_cast<char*>(vb), 4);
  if (in.gcount() != 4) throw DataError("truncated checkpoint header");
  const std::uint32_t version = static_cast<std::uint32_t>(vb[0]) |
                                (static_cast<std::uint32_t>(vb[1]) << 8) |
                                (static_cast<std::uint32_t>(vb[2]) << 16) |
                                (static_cast<std::uint32_t>(vb[3]) << 24);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  unsigned char hb[8];
  in.read(reinterpret_cast<char*>(hb), 8);
  if (in.gcount() != 8) throw DataError("truncated checkpoint header");
  std::uint64_t hlen = 0;
  for (int k = 0; k < 8; ++k) hlen |= static_cast<std::uint64_t>(hb[k]) << (8 * k);
  std::string header_text(hlen, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(hlen));
  if (static_cast<std::uint64_t>(in.gcount()) != hlen) {
    throw DataError("truncated checkpoint header");
  }

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header: " + std::string(e.what()));
  }

  LoadedCheckpoint loaded;
  ModelPlan plan = plan_from_json(header.at("plan"));
  std::vector<SkeletonGraph> graphs;
  for (const auto& gj : header.at("graphs")) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& ej : gj.at("edges")) {
      edges.emplace_back(ej.at(0).get<int>(), ej.at(1).get<int>());
    }
    graphs.push_back(
        make_graph(gj.at("name").get<std::string>(), gj.at("joints").get<std::size_t>(), edges));
  }

  loaded.model = ModelState::create(plan, graphs, /*seed=*/0);
  if (header.contains("vocabulary")) {
    loaded.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    if (!loaded.vocabulary.empty()) {
      const std::size_t d = loaded.model.plan.embedding_dim;
      loaded.model.params.add("head.w", d, loaded.vocabulary.size());
      loaded.model.params.add("head.b", 1, loaded.vocabulary.size());
    }
  }

  // The manifest must match the reconstructed registration exactly.
  const auto& arrays = header.at("params");
  if (arrays.size() != loaded.model.params.count()) {
    throw DataError("checkpoint parameter manifest does not match the model plan");
  }
  for (std::size_t i = 0; i < loaded.model.params.count(); ++i) {
    const ParamInfo& pi = loaded.model.params.info(i);
    const auto& aj = arrays.at(i);
    if (aj.at("name").get<std::string>() != pi.name ||
        aj.at("rows").get<std::size_t>() != pi.rows ||
        aj.at("cols").get<std::size_t>() != pi.cols ||
        aj.at("offset").get<std::size_t>() != pi.offset ||
        aj.at("dtype").get<std::string>() != "f64") {
      throw DataError("checkpoint array '" + aj.at("name").get<std::string>() +
                      "' does not match the reconstructed layout");
    }
  }

  read_doubles(in, loaded.model.params.values().data(), loaded.model.params.total(), path);

  if (header.contains("adam")) {
    const auto& aj = header.at("adam");
    AdamOptions opts;
    opts.lr = aj.at("lr").get<double>();
    opts.beta1 = aj.at("beta1").get<double>();
    opts.beta2 = aj.at("beta2").get<double>();
    opts.eps = aj.at("eps").get<double>();
    AdamState adam(loaded.model.params.total(), opts);
    adam.t = aj.at("t").get<std::int64_t>();
    read_doubles(in, adam.m.data(), adam.m.size(), path);
    read_doubles(in, adam.v.data(), adam.v.size(), path);
    loaded.adam = std::move(adam);
  }
  if (header.contains("meta")) {
    const auto& mj = header.at("meta");
    loaded.meta.episodes_done = mj.at("episodes_done").get<std::int64_t>();
    loaded.meta.best_val_top1 = mj.at("best_val_top1").get<double>();
    loaded.meta.note = mj.at("note").get<std::string>();
  }
  return loaded;
}

}  // namespace pslr
