#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pslr/config.hpp"
#include "pslr/errors.hpp"

using namespace pslr;
namespace fs = std::filesystem;

namespace {

fs::path write_config(const char* tag, const std::string& body) {
  const fs::path path = fs::temp_directory_path() / (std::string("pslr_cfg_") + tag + ".ini");
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults follow the training protocol") {
  const RunConfig c = RunConfig::from_map({});
  CHECK(c.n_way == 200);
  CHECK(c.k_shot == 3);
  CHECK(c.q_query == 2);
  CHECK(c.episodes == 50000);
  CHECK(c.tau == 0.3);
  CHECK(c.baseline_epochs == 50);
  CHECK(c.speed_factors == std::vector<double>{0.8, 1.0, 1.25});
  CHECK(c.plan_name == "paper");
  CHECK(c.make_plan().embedding_dim == 768);
  CHECK(c.distance == DistanceMode::squared);
}

TEST_CASE("files parse with sections, comments and overrides") {
  const fs::path path = write_config("parse", R"(# comment
[episodes]
n_way = 17
k_shot = 4

[model]
plan = desk
embedding_dim = 16

[run]
seed = 9
)");
  const RunConfig c = RunConfig::load(path, {"episodes.q_query=5", "run.seed=11"});
  CHECK(c.n_way == 17);
  CHECK(c.k_shot == 4);
  CHECK(c.q_query == 5);
  CHECK(c.seed == 11);
  CHECK(c.make_plan().embedding_dim == 16);
  fs::remove(path);
}

TEST_CASE("serialization round trips every effective value") {
  RunConfig c = RunConfig::from_map({{"episodes.n_way", "7"},
                                     {"model.plan", "desk"},
                                     {"model.limb_channels", "8,12"},
                                     {"model.face_channels", "4,8"},
                                     {"augmentation.factors", "0.9,1.1"},
                                     {"data.counts", "5,6,7"},
                                     {"data.classes", "3"},
                                     {"run.threads", "2"}});
  const fs::path path = fs::temp_directory_path() / "pslr_cfg_round.ini";
  c.save(path);
  const RunConfig back = RunConfig::load(path);
  CHECK(back.n_way == 7);
  CHECK(back.speed_factors == c.speed_factors);
  CHECK(back.counts == c.counts);
  CHECK(back.limb_channels == c.limb_channels);
  CHECK(back.threads == 2);
  CHECK(back.serialize() == c.serialize());

  const ModelPlan plan = back.make_plan();
  CHECK(plan.partitions[0].blocks.size() == 2);
  CHECK(plan.partitions[0].blocks[1].out_ch == 12);
  CHECK(plan.partitions[3].blocks[1].out_ch == 8);
  fs::remove(path);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(RunConfig::from_map({{"nonsense.key", "1"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"episodes.n_way", "1"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"episodes.n_way", "abc"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"data.tau", "1.5"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"model.embedding_dim", "30"}}), ConfigError);  // not %4
  CHECK_THROWS_AS(RunConfig::from_map({{"model.plan", "galactic"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"eval.split", "holdout"}}), DataError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/path.ini"), ConfigError);

  const fs::path bad = write_config("bad", "key_without_section = 1\n");
  CHECK_THROWS_AS(RunConfig::load(bad), ConfigError);
  fs::remove(bad);
}

}  // TEST_SUITE
