#include <doctest.h>

#include <cmath>
#include <vector>

#include "pslr/errors.hpp"
#include "pslr/prototypical.hpp"
#include "pslr/rng.hpp"

using namespace pslr;

namespace {

Mat random_mat(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("prototypical") {

TEST_CASE("prototypes: K=1 copies, arithmetic means, and the brute-force oracle") {
  Mat single(2, 3);
  single(0, 0) = 1.0;
  single(1, 1) = 2.0;
  const PrototypeDictionary one = compute_prototypes(single, {0, 1}, 2);
  CHECK(one.prototypes(0, 0) == 1.0);
  CHECK(one.prototypes(1, 1) == 2.0);
  CHECK(one.support_counts[0] == 1);

  Mat pair(2, 2);
  pair(0, 0) = 1.0;
  pair(0, 1) = 1.0;
  pair(1, 0) = 3.0;
  pair(1, 1) = 3.0;
  const PrototypeDictionary mean = compute_prototypes(pair, {0, 0}, 1);
  CHECK(mean.prototypes(0, 0) == doctest::Approx(2.0));
  CHECK(mean.prototypes(0, 1) == doctest::Approx(2.0));

  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(4);
    const std::size_t d = 1 + rng.uniform_int(6);
    const std::size_t m = n + rng.uniform_int(20);
    Mat emb = random_mat(rng, m, d);
    std::vector<int> labels(m);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i);  // every class covered
    for (std::size_t i = n; i < m; ++i) labels[i] = static_cast<int>(rng.uniform_int(n));

    const PrototypeDictionary dict = compute_prototypes(emb, labels, n);
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<double> acc(d, 0.0);
      std::size_t count = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (labels[i] != static_cast<int>(c)) continue;
        ++count;
        for (std::size_t j = 0; j < d; ++j) acc[j] += emb(i, j);
      }
      CHECK(count == dict.support_counts[c]);
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(dict.prototypes(c, j) ==
              doctest::Approx(acc[j] / static_cast<double>(count)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("prototypes are invariant to support order and reject empty classes") {
  Rng rng(32);
  Mat emb = random_mat(rng, 8, 4);
  std::vector<int> labels = {0, 1, 0, 1, 1, 0, 1, 0};
  const PrototypeDictionary a = compute_prototypes(emb, labels, 2);

  // Reverse the rows.
  Mat rev(8, 4);
  std::vector<int> rev_labels(8);
  for (std::size_t i = 0; i < 8; ++i) {
    rev_labels[i] = labels[7 - i];
    for (std::size_t j = 0; j < 4; ++j) rev(i, j) = emb(7 - i, j);
  }
  const PrototypeDictionary b = compute_prototypes(rev, rev_labels, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(a.prototypes(c, j) == doctest::Approx(b.prototypes(c, j)).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(compute_prototypes(emb, labels, 3), doctest::Contains("class 2"),
                       DataError);
}

TEST_CASE("log probabilities: uniform, argmax, and the hand-evaluated two-class case") {
  // Equidistant prototypes give the uniform distribution.
  Mat protos(4, 2);
  protos(0, 0) = 1.0;
  protos(1, 0) = -1.0;
  protos(2, 1) = 1.0;
  protos(3, 1) = -1.0;
  Mat query(1, 2);  // origin
  const Mat lp = proto_log_probs(query, protos, DistanceMode::squared);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(std::exp(lp(0, c)) == doctest::Approx(0.25).epsilon(1e-9));
  }

  // Query at prototype c wins.
  Mat q2(1, 2);
  q2(0, 0) = -1.0;
  const Mat lp2 = proto_log_probs(q2, protos, DistanceMode::squared);
  std::size_t best = 0;
  for (std::size_t c = 1; c < 4; ++c) {
    if (lp2(0, c) > lp2(0, best)) best = c;
  }
  CHECK(best == 1);

  // Hand computation: distances (1, 4) -> probabilities softmax(-1, -4).
  Mat p2(2, 1);
  p2(0, 0) = 1.0;
  p2(1, 0) = 2.0;
  Mat origin(1, 1);
  const Mat lp3 = proto_log_probs(origin, p2, DistanceMode::squared);
  const double e3 = std::exp(3.0);
  CHECK(std::exp(lp3(0, 0)) == doctest::Approx(e3 / (e3 + 1.0)).epsilon(1e-9));
  CHECK(std::exp(lp3(0, 1)) == doctest::Approx(1.0 / (e3 + 1.0)).epsilon(1e-9));

  // Unsquared mode uses plain Euclidean distance: softmax(-1, -2).
  const Mat lp4 = proto_log_probs(origin, p2, DistanceMode::unsquared);
  const double e1 = std::exp(1.0);
  CHECK(std::exp(lp4(0, 0)) == doctest::Approx(e1 / (e1 + 1.0)).epsilon(1e-9));
}

TEST_CASE("log-probability rows are proper distributions and translation invariant") {
  Rng rng(33);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(6);
    const std::size_t d = 1 + rng.uniform_int(8);
    const Mat protos = random_mat(rng, n, d, 2.0);
    const Mat queries = random_mat(rng, 3, d, 2.0);
    const DistanceMode mode = trial % 2 ? DistanceMode::unsquared : DistanceMode::squared;
    const Mat lp = proto_log_probs(queries, protos, mode);
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        REQUIRE(std::isfinite(lp(r, c)));
        sum += std::exp(lp(r, c));
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }

    // Common translation of queries and prototypes cancels.
    std::vector<double> shift(d);
    for (double& v : shift) v = rng.normal();
    Mat protos2 = protos;
    Mat queries2 = queries;
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) protos2(c, j) += shift[j];
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < d; ++j) queries2(r, j) += shift[j];
    const Mat lp2 = proto_log_probs(queries2, protos2, mode);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < n; ++c)
        CHECK(lp(r, c) == doctest::Approx(lp2(r, c)).epsilon(1e-8));

    // Permuting prototypes permutes columns.
    Mat perm_protos(n, d);
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) perm_protos((c + 1) % n, j) = protos(c, j);
    const Mat lp3 = proto_log_probs(queries, perm_protos, mode);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < n; ++c)
        CHECK(lp(r, c) == doctest::Approx(lp3(r, (c + 1) % n)).epsilon(1e-9));
  }
}

TEST_CASE("episode loss: uniform rows give ln N, confident rows give ~0, oracle agrees") {
  Mat uniform(4, 5);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) uniform(r, c) = std::log(0.2);
  CHECK(episode_loss(uniform, {0, 1, 2, 3}) == doctest::Approx(std::log(5.0)).epsilon(1e-9));

  Mat confident(2, 3);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) confident(r, c) = std::log(1e-9);
    confident(r, r) = std::log(1.0 - 2e-9);
  }
  CHECK(episode_loss(confident, {0, 1}) < 1e-6);

  Rng rng(34);
  Mat lp(3, 4);
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0.0;
    std::vector<double> raw(4);
    for (double& v : raw) {
      v = rng.uniform() + 0.01;
      total += v;
    }
    for (std::size_t c = 0; c < 4; ++c) lp(r, c) = std::log(raw[c] / total);
  }
  const std::vector<int> labels = {2, 0, 3};
  double expect = 0.0;
  for (std::size_t r = 0; r < 3; ++r) expect -= lp(r, labels[r]);
  expect /= 3.0;
  CHECK(episode_loss(lp, labels) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("episode loss gradients in embedding space match finite differences") {
  Rng rng(35);
  for (DistanceMode mode : {DistanceMode::squared, DistanceMode::unsquared}) {
    const std::size_t n = 3, k = 2, q = 2, d = 5;
    Mat support = random_mat(rng, n * k, d);
    Mat queries = random_mat(rng, n * q, d);
    std::vector<int> s_labels, q_labels;
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t i = 0; i < k; ++i) s_labels.push_back(static_cast<int>(c));
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t i = 0; i < q; ++i) q_labels.push_back(static_cast<int>(c));

    Mat ds, dq;
    const double loss =
        episode_loss_backward(support, s_labels, queries, q_labels, n, mode, ds, dq);
    CHECK(loss > 0.0);

    auto loss_at = [&](const Mat& s, const Mat& qm) {
      const PrototypeDictionary dict = compute_prototypes(s, s_labels, n);
      const Mat lp = proto_log_probs(qm, dict.prototypes, mode);
      return episode_loss(lp, q_labels);
    };

    const double h = 1e-6;
    for (std::size_t i = 0; i < support.size(); i += 2) {
      Mat probe = support;
      probe.data()[i] += h;
      const double up = loss_at(probe, queries);
      probe.data()[i] -= 2.0 * h;
      const double down = loss_at(probe, queries);
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(ds.data()[i]), 1e-8});
      CHECK(std::abs(fd - ds.data()[i]) / denom < 1e-4);
    }
    for (std::size_t i = 0; i < queries.size(); i += 2) {
      Mat probe = queries;
      probe.data()[i] += h;
      const double up = loss_at(support, probe);
      probe.data()[i] -= 2.0 * h;
      const double down = loss_at(support, probe);
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(dq.data()[i]), 1e-8});
      CHECK(std::abs(fd - dq.data()[i]) / denom < 1e-4);
    }
  }
}

TEST_CASE("distance mode parses and rejects") {
  CHECK(parse_distance_mode("squared") == DistanceMode::squared);
  CHECK(parse_distance_mode("unsquared") == DistanceMode::unsquared);
  CHECK_THROWS_AS(parse_distance_mode("cosine"), ConfigError);
}

}  // TEST_SUITE

// --- train_episode over a tiny in-memory model ---

namespace {

ModelState train_test_model(std::uint64_t seed) {
  ModelPlan plan;
  plan.embedding_dim = 8;
  plan.frames = 6;
  plan.temporal_kernel = 3;
  plan.partitions = {PartitionPlan{{{2, 4}}}};
  return ModelState::create(plan, {make_graph("t", 2, {{0, 1}})}, seed);
}

EncoderInput class_pattern(Rng& rng, int label, std::size_t frames = 6) {
  PartitionInput input;
  input.frames = frames;
  input.joints = 2;
  input.coords.resize(frames * 2, 2);
  input.mask.assign(frames * 2, 1.0);
  const double center = label == 0 ? 0.8 : -0.8;
  for (std::size_t r = 0; r < frames * 2; ++r) {
    input.coords(r, 0) = center + 0.05 * rng.normal();
    input.coords(r, 1) = -center + 0.05 * rng.normal();
  }
  return {std::move(input)};
}

EpisodeBatch random_episode(Rng& rng) {
  EpisodeBatch batch;
  batch.n_classes = 2;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 2; ++i) {
      batch.support.push_back(class_pattern(rng, c));
      batch.support_labels.push_back(c);
    }
    for (int i = 0; i < 2; ++i) {
      batch.query.push_back(class_pattern(rng, c));
      batch.query_labels.push_back(c);
    }
  }
  return batch;
}

}  // namespace

TEST_SUITE("prototypical") {

TEST_CASE("zero learning rate reports the loss but leaves parameters unchanged") {
  ModelState model = train_test_model(71);
  const std::vector<double> before = model.params.values();
  AdamOptions opts;
  opts.lr = 0.0;
  AdamState adam(model.params.total(), opts);
  Rng rng(5);
  const EpisodeBatch batch = random_episode(rng);
  const double loss = train_episode(model, batch, adam, {});
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);
  CHECK(model.params.values() == before);
}

TEST_CASE("two separable classes: loss decreases over 50 episodes") {
  ModelState model = train_test_model(72);
  AdamState adam(model.params.total(), {});
  Rng rng(6);
  std::vector<double> losses;
  for (int e = 0; e < 50; ++e) {
    losses.push_back(train_episode(model, random_episode(rng), adam, {}));
  }
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += losses[i];
    last += losses[40 + i];
  }
  CHECK(first / 10.0 > last / 10.0);
}

TEST_CASE("training is deterministic given seeds") {
  for (int threads : {1, 2}) {
    ModelState m1 = train_test_model(73);
    ModelState m2 = train_test_model(73);
    AdamState a1(m1.params.total(), {});
    AdamState a2(m2.params.total(), {});
    TrainStepOptions opts;
    opts.threads = threads;
    Rng rng1(7), rng2(7);
    for (int e = 0; e < 5; ++e) {
      const double l1 = train_episode(m1, random_episode(rng1), a1, opts);
      const double l2 = train_episode(m2, random_episode(rng2), a2, opts);
      CHECK(l1 == l2);
    }
    CHECK(m1.params.values() == m2.params.values());
  }
}

}  // TEST_SUITE
