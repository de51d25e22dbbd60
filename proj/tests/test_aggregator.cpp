#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pslr/aggregator.hpp"
#include "pslr/rng.hpp"

using namespace pslr;

namespace {

struct Agg {
  ParamStore store;
  AggregatorLayout layout;
  std::size_t d;
};

Agg make_agg(std::size_t d, std::uint64_t seed) {
  Agg agg;
  agg.d = d;
  std::vector<InitRule> rules;
  agg.layout = register_aggregator_params(agg.store, d, rules);
  init_params(agg.store, rules, seed);
  return agg;
}

Mat random_seq(Rng& rng, std::size_t frames, std::size_t d) {
  Mat z(frames, d);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < d; ++c) z(t, c) = rng.normal();
  return z;
}

// Sliding-window oracle for one conv branch with symmetric zero padding.
Mat naive_branch(const Mat& z, ConstMatView w, std::size_t k) {
  const std::size_t T = z.rows();
  const std::size_t d = z.cols();
  const int radius = static_cast<int>(k / 2);
  Mat out(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t tap = 0; tap < k; ++tap) {
      const int src = static_cast<int>(t) + static_cast<int>(tap) - radius;
      if (src < 0 || src >= static_cast<int>(T)) continue;
      for (std::size_t ci = 0; ci < d; ++ci)
        for (std::size_t co = 0; co < d; ++co)
          out(t, co) += z(src, ci) * w(tap * d + ci, co);
    }
  }
  return out;
}

Mat naive_msta(const Agg& agg, const Mat& z) {
  const std::size_t T = z.rows();
  const std::size_t d = z.cols();
  Mat bcat(T, 3 * d);
  for (std::size_t b = 0; b < 3; ++b) {
    const Mat branch = naive_branch(z, agg.store.view(agg.layout.conv_w[b]), kMstaKernels[b]);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < d; ++c) bcat(t, b * d + c) = branch(t, c);
  }
  ConstMatView pw = agg.store.view(agg.layout.proj_w);
  ConstMatView pb = agg.store.view(agg.layout.proj_b);
  Mat h(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = z(t, c) + pb.ptr[c];
      for (std::size_t p = 0; p < 3 * d; ++p) acc += bcat(t, p) * pw(p, c);
      h(t, c) = acc;
    }
  }
  return h;
}

}  // namespace

TEST_SUITE("aggregator") {

TEST_CASE("zero kernels and zero projection leave the residual identity") {
  Agg agg = make_agg(8, 3);
  for (std::size_t b = 0; b < 3; ++b) {
    MatView w = agg.store.view(agg.layout.conv_w[b]);
    std::fill(w.ptr, w.ptr + w.size(), 0.0);
  }
  MatView pw = agg.store.view(agg.layout.proj_w);
  std::fill(pw.ptr, pw.ptr + pw.size(), 0.0);

  Rng rng(5);
  const Mat z = random_seq(rng, 12, 8);
  Mat h;
  msta_forward(agg.store, agg.layout, z, h, nullptr);
  for (std::size_t t = 0; t < z.rows(); ++t)
    for (std::size_t c = 0; c < z.cols(); ++c) CHECK(h(t, c) == z(t, c));
}

TEST_CASE("constant-in-time input stays constant away from the padded ends") {
  Agg agg = make_agg(8, 7);
  Rng rng(6);
  Mat z(20, 8);
  std::vector<double> row(8);
  for (double& v : row) v = rng.normal();
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t c = 0; c < 8; ++c) z(t, c) = row[c];
  Mat h;
  msta_forward(agg.store, agg.layout, z, h, nullptr);
  // Interior frames (>= 3 from each end for the widest kernel) are equal.
  for (std::size_t t = 4; t + 4 < 20; ++t) {
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(h(t, c) == doctest::Approx(h(3, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("msta matches the sliding-window oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Agg agg = make_agg(8, 100 + trial);
    const std::size_t T = 1 + rng.uniform_int(14);
    const Mat z = random_seq(rng, T, 8);
    Mat h;
    msta_forward(agg.store, agg.layout, z, h, nullptr);
    const Mat expect = naive_msta(agg, z);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < 8; ++c)
        CHECK(h(t, c) == doctest::Approx(expect(t, c)).epsilon(1e-10));
  }
}

TEST_CASE("attention pool of a single frame returns that frame") {
  Agg agg = make_agg(8, 9);
  Rng rng(8);
  const Mat h = random_seq(rng, 1, 8);
  std::vector<double> z;
  attention_pool(agg.store, agg.layout, h, z, nullptr);
  for (std::size_t c = 0; c < 8; ++c) CHECK(z[c] == doctest::Approx(h(0, c)).epsilon(1e-12));
}

TEST_CASE("equal scores average and score shifts cancel") {
  Agg agg = make_agg(8, 10);
  // Zero the scoring weights: every alpha_t equals the bias, so the softmax
  // is uniform and z is the frame mean.
  MatView w1 = agg.store.view(agg.layout.score_w1);
  std::fill(w1.ptr, w1.ptr + w1.size(), 0.0);
  Rng rng(11);
  const Mat h = random_seq(rng, 9, 8);
  std::vector<double> z;
  attention_pool(agg.store, agg.layout, h, z, nullptr);
  for (std::size_t c = 0; c < 8; ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 9; ++t) mean += h(t, c);
    mean /= 9.0;
    CHECK(z[c] == doctest::Approx(mean).epsilon(1e-12));
  }

  // Adding a constant to every score (through the final bias) changes nothing.
  Agg shifted = make_agg(8, 10);
  MatView b2 = shifted.store.view(shifted.layout.score_b2);
  b2.ptr[0] += 37.5;
  const Mat h2 = random_seq(rng, 7, 8);
  std::vector<double> z_base, z_shift;
  Agg base = make_agg(8, 10);
  attention_pool(base.store, base.layout, h2, z_base, nullptr);
  attention_pool(shifted.store, shifted.layout, h2, z_shift, nullptr);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(z_shift[c] == doctest::Approx(z_base[c]).epsilon(1e-9));
  }
}

TEST_CASE("pooled output lies in the convex hull with normalized positive weights") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Agg agg = make_agg(8, 200 + trial);
    const std::size_t T = 1 + rng.uniform_int(12);
    const Mat h = random_seq(rng, T, 8);
    AggTrace trace;
    trace.h = h;
    std::vector<double> z;
    attention_pool(agg.store, agg.layout, h, z, &trace);

    double wsum = 0.0;
    for (double w : trace.att) {
      CHECK(w > 0.0);
      wsum += w;
    }
    CHECK(std::abs(wsum - 1.0) < 1e-6);
    for (std::size_t c = 0; c < 8; ++c) {
      double lo = h(0, c), hi = h(0, c);
      for (std::size_t t = 1; t < T; ++t) {
        lo = std::min(lo, h(t, c));
        hi = std::max(hi, h(t, c));
      }
      CHECK(z[c] >= lo - 1e-12);
      CHECK(z[c] <= hi + 1e-12);
    }
  }
}

TEST_CASE("attention pooling alone ignores frame order") {
  Agg agg = make_agg(8, 13);
  Rng rng(14);
  const std::size_t T = 10;
  const Mat h = random_seq(rng, T, 8);
  Mat perm_h(T, 8);
  std::vector<std::size_t> perm(T);
  for (std::size_t t = 0; t < T; ++t) perm[t] = (t * 7 + 3) % T;  // a permutation of 0..9
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < 8; ++c) perm_h(perm[t], c) = h(t, c);

  std::vector<double> z1, z2;
  attention_pool(agg.store, agg.layout, h, z1, nullptr);
  attention_pool(agg.store, agg.layout, perm_h, z2, nullptr);
  for (std::size_t c = 0; c < 8; ++c) CHECK(z1[c] == doctest::Approx(z2[c]).epsilon(1e-10));
}

TEST_CASE("aggregator gradients match finite differences") {
  Rng rng(15);
  Agg agg = make_agg(8, 16);
  const std::size_t T = 7;
  const Mat z_in = random_seq(rng, T, 8);
  std::vector<double> weight(8);
  for (double& w : weight) w = rng.normal();

  auto objective = [&](const ParamStore& store) {
    std::vector<double> z;
    aggregator_forward(store, agg.layout, z_in, z, nullptr);
    double total = 0.0;
    for (std::size_t c = 0; c < 8; ++c) total += weight[c] * z[c];
    return total;
  };

  AggTrace trace;
  std::vector<double> z;
  aggregator_forward(agg.store, agg.layout, z_in, z, &trace);
  std::vector<double> grad(agg.store.total(), 0.0);
  Mat dz_seq;
  aggregator_backward(agg.store, agg.layout, trace, weight.data(), dz_seq, grad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < agg.store.total(); i += 3) {
    double& p = agg.store.values()[i];
    const double keep = p;
    p = keep + h;
    const double up = objective(agg.store);
    p = keep - h;
    const double down = objective(agg.store);
    p = keep;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
  }

  // Input gradient too.
  Mat z_probe = z_in;
  for (std::size_t r = 0; r < T * 8; r += 5) {
    double& p = z_probe.data()[r];
    const double keep = p;
    auto obj_input = [&] {
      std::vector<double> zz;
      aggregator_forward(agg.store, agg.layout, z_probe, zz, nullptr);
      double total = 0.0;
      for (std::size_t c = 0; c < 8; ++c) total += weight[c] * zz[c];
      return total;
    };
    p = keep + h;
    const double up = obj_input();
    p = keep - h;
    const double down = obj_input();
    p = keep;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(dz_seq.data()[r]), 1e-8});
    CHECK(std::abs(fd - dz_seq.data()[r]) / denom < 1e-4);
  }
}

}  // TEST_SUITE
