#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pslr/baseline.hpp"
#include "pslr/checkpoint.hpp"
#include "pslr/errors.hpp"

using namespace pslr;
namespace fs = std::filesystem;

namespace {

ModelPlan small_plan() {
  ModelPlan plan;
  plan.embedding_dim = 8;
  plan.frames = 10;
  plan.temporal_kernel = 3;
  const PartitionPlan limb{{{2, 4}, {4, 6}}};
  plan.partitions = {limb, limb, limb, limb};
  return plan;
}

fs::path temp_file(const char* tag) {
  return fs::temp_directory_path() / (std::string("pslr_ckpt_") + tag + ".pslc");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("checkpoints round trip bit-exactly") {
  ModelState model = ModelState::create(small_plan(), canonical_graphs(), 55);
  AdamState adam(model.params.total(), {});
  adam.t = 17;
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    adam.m[i] = 0.001 * static_cast<double>(i % 97);
    adam.v[i] = 0.002 * static_cast<double>(i % 31);
  }
  TrainingMeta meta;
  meta.episodes_done = 1234;
  meta.best_val_top1 = 0.625;
  meta.note = "unit";

  const fs::path path = temp_file("roundtrip");
  save_checkpoint(path, model, &adam, &meta);
  const LoadedCheckpoint loaded = load_checkpoint(path);

  CHECK(loaded.model.params.values() == model.params.values());
  CHECK(loaded.model.plan.embedding_dim == 8);
  CHECK(loaded.model.plan.partitions.size() == 4);
  CHECK(loaded.model.graphs.size() == 4);
  CHECK(loaded.model.graphs[1].edges == model.graphs[1].edges);
  REQUIRE(loaded.adam.has_value());
  CHECK(loaded.adam->t == 17);
  CHECK(loaded.adam->m == adam.m);
  CHECK(loaded.adam->v == adam.v);
  CHECK(loaded.meta.episodes_done == 1234);
  CHECK(loaded.meta.best_val_top1 == 0.625);

  // Saving the load gives identical bytes.
  const fs::path path2 = temp_file("roundtrip2");
  save_checkpoint(path2, loaded.model, &*loaded.adam, &loaded.meta);
  CHECK(slurp(path) == slurp(path2));
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("baseline checkpoints carry the vocabulary and head") {
  const std::vector<std::string> vocab = {"x", "y", "z"};
  BaselineModel model = BaselineModel::create(small_plan(), canonical_graphs(), vocab, 66);
  TrainingMeta meta;
  meta.note = "baseline";
  const fs::path path = temp_file("baseline");
  save_checkpoint(path, model.backbone, nullptr, &meta, &model.vocabulary);

  const LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.vocabulary == vocab);
  CHECK_FALSE(loaded.adam.has_value());
  CHECK(loaded.model.params.values() == model.backbone.params.values());
  CHECK(loaded.model.params.find("head.w") == model.head_w);
  fs::remove(path);
}

TEST_CASE("embeddings survive the round trip unchanged") {
  ModelState model = ModelState::create(small_plan(), canonical_graphs(), 77);
  const fs::path path = temp_file("embed");
  save_checkpoint(path, model);
  const LoadedCheckpoint loaded = load_checkpoint(path);

  // Same input through both models.
  EncoderInput input;
  Rng rng(3);
  const std::size_t joint_counts[] = {9, 21, 21, 68};
  for (std::size_t p = 0; p < 4; ++p) {
    PartitionInput pi;
    pi.frames = 10;
    pi.joints = joint_counts[p];
    pi.coords.resize(10 * pi.joints, 2);
    pi.mask.assign(10 * pi.joints, 1.0);
    for (std::size_t r = 0; r < pi.coords.rows(); ++r) {
      pi.coords(r, 0) = rng.normal();
      pi.coords(r, 1) = rng.normal();
    }
    input.push_back(std::move(pi));
  }
  std::vector<double> z1, z2;
  embed(model, input, z1);
  embed(loaded.model, input, z2);
  CHECK(z1 == z2);
  fs::remove(path);
}

TEST_CASE("corrupt checkpoints fail with named errors") {
  ModelState model = ModelState::create(small_plan(), canonical_graphs(), 88);
  const fs::path path = temp_file("corrupt");
  save_checkpoint(path, model);

  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.put('Z');
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"), DataError);

  save_checkpoint(path, model);
  fs::resize_file(path, fs::file_size(path) - 64);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), DataError);
  fs::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

}  // TEST_SUITE
