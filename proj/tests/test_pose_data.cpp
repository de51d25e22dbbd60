#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pslr/errors.hpp"
#include "pslr/pose_data.hpp"
#include "pslr/rng.hpp"
#include "pslr/synthetic.hpp"

using namespace pslr;
namespace fs = std::filesystem;

namespace {

KeypointSequence blank_sequence(std::size_t frames) {
  KeypointSequence seq;
  seq.video_id = "vid";
  seq.gloss = "gloss";
  seq.num_frames = frames;
  seq.data.assign(frames * kNumJoints * 3, 0.0f);
  return seq;
}

void set_joint(KeypointSequence& seq, std::size_t t, int j, float x, float y, float conf) {
  float* p = seq.joint(t, j);
  p[0] = x;
  p[1] = y;
  p[2] = conf;
}

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("pslr_pose_test_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

KeypointSequence random_sequence(std::uint64_t seed, std::size_t t_len = 12) {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.samples_per_class = {1, 1};
  spec.t_min = t_len;
  spec.t_max = t_len;
  spec.noise_scale = 5.0;
  spec.seed = seed;
  spec.conf_dropout = 0.1;
  return synthesize_sequence(spec, seed % 2, 0);
}

}  // namespace

TEST_SUITE("pose_data") {

TEST_CASE("all-zero frame partitions to all-zero blocks with canonical shapes") {
  KeypointSequence seq = blank_sequence(1);
  const auto parts = partition_keypoints(
      std::span<const float>(seq.data.data(), kNumJoints * 3), canonical_partitions());
  REQUIRE(parts.size() == 4);
  CHECK(parts[0].joints() == 9);
  CHECK(parts[1].joints() == 21);
  CHECK(parts[2].joints() == 21);
  CHECK(parts[3].joints() == 68);
  for (const auto& p : parts) {
    for (double v : p.coords) CHECK(v == 0.0);
    for (double v : p.conf) CHECK(v == 0.0);
  }
}

TEST_CASE("left-wrist-only frame routes to the left hand and body wrist rows") {
  KeypointSequence seq = blank_sequence(1);
  set_joint(seq, 0, joint::kLeftWrist, 5.0f, 7.0f, 0.9f);
  const auto parts = partition_keypoints(
      std::span<const float>(seq.data.data(), kNumJoints * 3), canonical_partitions());

  // Body row 5 is the left wrist.
  for (std::size_t j = 0; j < parts[0].joints(); ++j) {
    const bool expect = j == 5;
    CHECK((parts[0].coords[j * 2] != 0.0) == expect);
  }
  // Left hand row 0 is the wrist anchor; everything else stays zero.
  for (std::size_t j = 0; j < parts[1].joints(); ++j) {
    const bool expect = j == 0;
    CHECK((parts[1].coords[j * 2] != 0.0) == expect);
  }
  for (double v : parts[2].coords) CHECK(v == 0.0);
  for (double v : parts[3].coords) CHECK(v == 0.0);
}

TEST_CASE("partitioning equals an independent gather") {
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    KeypointSequence seq = blank_sequence(1);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      set_joint(seq, 0, static_cast<int>(j), static_cast<float>(rng.normal()),
                static_cast<float>(rng.normal()), static_cast<float>(rng.uniform()));
    }
    const auto parts = partition_keypoints(
        std::span<const float>(seq.data.data(), kNumJoints * 3), canonical_partitions());

    const auto& specs = canonical_partitions();
    for (std::size_t p = 0; p < specs.size(); ++p) {
      for (std::size_t r = 0; r < specs[p].joint_indices.size(); ++r) {
        const int src = specs[p].joint_indices[r];
        CHECK(parts[p].coords[r * 2 + 0] == doctest::Approx(seq.x(0, src)).epsilon(1e-12));
        CHECK(parts[p].coords[r * 2 + 1] == doctest::Approx(seq.y(0, src)).epsilon(1e-12));
        CHECK(parts[p].conf[r] == doctest::Approx(seq.conf(0, src)).epsilon(1e-12));
      }
    }
    // Synthesized body rows.
    const double neck_x = 0.5 * (static_cast<double>(seq.x(0, joint::kLeftShoulder)) +
                                 static_cast<double>(seq.x(0, joint::kRightShoulder)));
    CHECK(parts[0].coords[7 * 2 + 0] == doctest::Approx(neck_x).epsilon(1e-12));
    CHECK(parts[0].conf[7] ==
          doctest::Approx(std::min(seq.conf(0, joint::kLeftShoulder),
                                   seq.conf(0, joint::kRightShoulder))));
    const double hip_y = 0.5 * (static_cast<double>(seq.y(0, joint::kLeftHip)) +
                                static_cast<double>(seq.y(0, joint::kRightHip)));
    CHECK(parts[0].coords[8 * 2 + 1] == doctest::Approx(hip_y).epsilon(1e-12));
  }
}

TEST_CASE("malformed joint count is rejected with both counts named") {
  std::vector<float> bad(100 * 3, 0.0f);
  CHECK_THROWS_WITH_AS(
      partition_keypoints(std::span<const float>(bad.data(), bad.size()), canonical_partitions()),
      doctest::Contains("133"), DataError);
}

TEST_CASE("normalization maps the body box via 2(p-c)/s") {
  KeypointSequence seq = blank_sequence(2);
  // Confident body joints spanning (100,100)-(300,200).
  set_joint(seq, 0, joint::kLeftShoulder, 100.0f, 100.0f, 1.0f);
  set_joint(seq, 0, joint::kRightShoulder, 300.0f, 200.0f, 1.0f);
  set_joint(seq, 1, joint::kLeftShoulder, 100.0f, 100.0f, 1.0f);
  set_joint(seq, 1, joint::kRightShoulder, 300.0f, 200.0f, 1.0f);

  const NormalizedSample norm = normalize_sequence(seq, canonical_partitions(), 0.3);
  // s = max(200, 100) = 200, center (200, 150); (300,200) -> (1.0, 0.5).
  const PartitionBlock& body = norm.parts[0];
  CHECK(body.coords[(0 * 9 + 2) * 2 + 0] == doctest::Approx(1.0));   // right shoulder x
  CHECK(body.coords[(0 * 9 + 2) * 2 + 1] == doctest::Approx(0.5));   // right shoulder y
  CHECK(body.coords[(0 * 9 + 1) * 2 + 0] == doctest::Approx(-1.0));  // left shoulder x
  // Synthesized neck = box center -> exactly (0,0), confident.
  CHECK(body.coords[(0 * 9 + 7) * 2 + 0] == doctest::Approx(0.0));
  CHECK(body.coords[(0 * 9 + 7) * 2 + 1] == doctest::Approx(0.0));
  CHECK(body.mask[0 * 9 + 7] == 1.0f);
}

TEST_CASE("hand joint colocated with its wrist normalizes to the origin") {
  KeypointSequence seq = blank_sequence(1);
  set_joint(seq, 0, joint::kLeftShoulder, 0.0f, 0.0f, 1.0f);
  set_joint(seq, 0, joint::kRightShoulder, 100.0f, 100.0f, 1.0f);
  set_joint(seq, 0, joint::kLeftWrist, 40.0f, 60.0f, 0.95f);
  set_joint(seq, 0, joint::kLeftFingerStart, 40.0f, 60.0f, 0.9f);  // same spot as wrist
  const NormalizedSample norm = normalize_sequence(seq, canonical_partitions(), 0.3);
  const PartitionBlock& hand = norm.parts[1];
  CHECK(hand.coords[0] == 0.0f);          // wrist anchor at origin
  CHECK(hand.coords[1] == 0.0f);
  CHECK(hand.coords[1 * 2 + 0] == 0.0f);  // colocated finger joint
  CHECK(hand.coords[1 * 2 + 1] == 0.0f);
  CHECK(hand.mask[1] == 1.0f);
}

TEST_CASE("confidence gate is strict at tau") {
  KeypointSequence seq = blank_sequence(1);
  set_joint(seq, 0, joint::kLeftShoulder, 0.0f, 0.0f, 1.0f);
  set_joint(seq, 0, joint::kRightShoulder, 100.0f, 100.0f, 1.0f);
  set_joint(seq, 0, joint::kLeftWrist, 40.0f, 60.0f, 0.29f);
  set_joint(seq, 0, joint::kRightWrist, 40.0f, 60.0f, 0.30f);
  const NormalizedSample norm = normalize_sequence(seq, canonical_partitions(), 0.3);
  const PartitionBlock& body = norm.parts[0];
  CHECK(body.mask[5] == 0.0f);  // 0.29 < 0.3: gated
  CHECK(body.coords[5 * 2 + 0] == 0.0f);
  CHECK(body.coords[5 * 2 + 1] == 0.0f);
  CHECK(body.mask[6] == 1.0f);  // 0.30 is kept
  CHECK(body.coords[6 * 2 + 0] != 0.0f);
}

TEST_CASE("degenerate sequences are rejected") {
  KeypointSequence none = blank_sequence(3);  // every confidence is zero
  CHECK_THROWS_WITH_AS(normalize_sequence(none, canonical_partitions(), 0.3),
                       doctest::Contains("no body joint"), DataError);

  KeypointSequence point = blank_sequence(2);
  for (std::size_t t = 0; t < 2; ++t) {
    set_joint(point, t, joint::kLeftShoulder, 50.0f, 50.0f, 1.0f);
    set_joint(point, t, joint::kRightShoulder, 50.0f, 50.0f, 1.0f);
  }
  CHECK_THROWS_WITH_AS(normalize_sequence(point, canonical_partitions(), 0.3),
                       doctest::Contains("degenerate"), DataError);
}

TEST_CASE("gating, anchoring and affine invariance over randomized sequences") {
  // The acceptance suite runs this over >= 1000 sequences; unit scale here.
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const KeypointSequence seq = random_sequence(seed);
    const double tau = 0.3;
    const NormalizedSample norm = normalize_sequence(seq, canonical_partitions(), tau);

    const auto& specs = canonical_partitions();
    for (std::size_t t = 0; t < seq.num_frames; ++t) {
      const auto parts = partition_keypoints(
          std::span<const float>(seq.data.data() + t * kNumJoints * 3, kNumJoints * 3), specs);
      for (std::size_t p = 0; p < specs.size(); ++p) {
        const std::size_t jp = parts[p].joints();
        for (std::size_t j = 0; j < jp; ++j) {
          const bool gated = parts[p].conf[j] < tau;
          CHECK((norm.parts[p].mask[t * jp + j] == 0.0f) == gated);
          if (gated) {
            CHECK(norm.parts[p].coords[(t * jp + j) * 2 + 0] == 0.0f);
            CHECK(norm.parts[p].coords[(t * jp + j) * 2 + 1] == 0.0f);
          }
        }
        if (auto row = specs[p].anchor_row()) {
          if (parts[p].conf[*row] >= tau) {
            CHECK(norm.parts[p].coords[(t * jp + *row) * 2 + 0] == 0.0f);
            CHECK(norm.parts[p].coords[(t * jp + *row) * 2 + 1] == 0.0f);
          }
        }
      }
    }

    // Uniform screen-affine placement cancels out.
    const double alpha = 1.0 + 0.5 * static_cast<double>(seed % 5);
    const double beta_x = 17.25 * static_cast<double>(seed % 7) - 30.0;
    const double beta_y = -11.5 * static_cast<double>(seed % 3) + 12.0;
    KeypointSequence moved = seq;
    for (std::size_t t = 0; t < seq.num_frames; ++t) {
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        float* pt = moved.joint(t, j);
        pt[0] = static_cast<float>(alpha * static_cast<double>(pt[0]) + beta_x);
        pt[1] = static_cast<float>(alpha * static_cast<double>(pt[1]) + beta_y);
      }
    }
    const NormalizedSample norm2 = normalize_sequence(moved, canonical_partitions(), tau);
    for (std::size_t p = 0; p < 4; ++p) {
      REQUIRE(norm2.parts[p].coords.size() == norm.parts[p].coords.size());
      for (std::size_t i = 0; i < norm.parts[p].coords.size(); ++i) {
        CHECK(std::abs(norm2.parts[p].coords[i] - norm.parts[p].coords[i]) < 1e-5);
      }
      CHECK(norm2.parts[p].mask == norm.parts[p].mask);
    }
  }
}

TEST_CASE("speed factor 1.0 is the identity") {
  const NormalizedSample norm =
      normalize_sequence(random_sequence(7), canonical_partitions(), 0.3);
  const NormalizedSample out = speed_augment(norm, 1.0);
  REQUIRE(out.num_frames == norm.num_frames);
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(out.parts[p].coords == norm.parts[p].coords);
    CHECK(out.parts[p].mask == norm.parts[p].mask);
  }
}

TEST_CASE("speed factors change length by round(T/factor)") {
  NormalizedSample norm = normalize_sequence(random_sequence(8, 25), canonical_partitions(), 0.3);
  norm = resample_to_length(norm, 100);
  CHECK(speed_augment(norm, 1.25).num_frames == 80);
  CHECK(speed_augment(norm, 0.8).num_frames == 125);

  NormalizedSample one = norm;
  one.num_frames = 1;
  for (auto& part : one.parts) {
    part.coords.resize(part.joints * 2);
    part.mask.resize(part.joints);
  }
  CHECK_THROWS_AS(speed_augment(one, 1.0), DataError);
  CHECK_THROWS_AS(speed_augment(norm, 0.0), ConfigError);
}

TEST_CASE("linear trajectories stay linear under resampling") {
  // x(t) = t/(T-1) for every joint; any resampled length keeps it linear.
  const std::size_t T = 40;
  NormalizedSample sample;
  sample.video_id = "lin";
  sample.gloss = "lin";
  sample.num_frames = T;
  for (std::size_t p = 0; p < 4; ++p) {
    const std::size_t jp = p == 0 ? 9 : (p == 3 ? 68 : 21);
    sample.parts[p].joints = jp;
    sample.parts[p].coords.assign(T * jp * 2, 0.0f);
    sample.parts[p].mask.assign(T * jp, 1.0f);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < jp; ++j) {
        sample.parts[p].coords[(t * jp + j) * 2] =
            static_cast<float>(static_cast<double>(t) / (T - 1));
      }
    }
  }
  for (double factor : {0.8, 1.25}) {
    const NormalizedSample out = speed_augment(sample, factor);
    const std::size_t T2 = out.num_frames;
    for (std::size_t t = 0; t < T2; ++t) {
      const double expect = static_cast<double>(t) / (T2 - 1);
      CHECK(std::abs(out.parts[1].coords[(t * 21 + 3) * 2] - expect) < 1e-6);
    }
  }
}

TEST_CASE("resample_to_length midpoint and round trip") {
  NormalizedSample two;
  two.num_frames = 2;
  two.video_id = "two";
  two.gloss = "g";
  for (std::size_t p = 0; p < 4; ++p) {
    const std::size_t jp = p == 0 ? 9 : (p == 3 ? 68 : 21);
    two.parts[p].joints = jp;
    two.parts[p].coords.assign(2 * jp * 2, 0.0f);
    two.parts[p].mask.assign(2 * jp, 1.0f);
    for (std::size_t j = 0; j < jp; ++j) {
      two.parts[p].coords[(0 * jp + j) * 2] = 1.0f;
      two.parts[p].coords[(1 * jp + j) * 2] = 3.0f;
    }
  }
  const NormalizedSample three = resample_to_length(two, 3);
  CHECK(three.parts[2].coords[(1 * 21 + 5) * 2] == doctest::Approx(2.0));

  // Linear-in-time motion survives T -> 2T -> T within float precision.
  const std::size_t T = 30;
  NormalizedSample lin;
  lin.num_frames = T;
  for (std::size_t p = 0; p < 4; ++p) {
    const std::size_t jp = p == 0 ? 9 : (p == 3 ? 68 : 21);
    lin.parts[p].joints = jp;
    lin.parts[p].coords.assign(T * jp * 2, 0.0f);
    lin.parts[p].mask.assign(T * jp, 1.0f);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < jp; ++j) {
        lin.parts[p].coords[(t * jp + j) * 2] =
            static_cast<float>(0.3 + 1.2 * static_cast<double>(t) / (T - 1));
        lin.parts[p].coords[(t * jp + j) * 2 + 1] =
            static_cast<float>(-0.4 * static_cast<double>(t) / (T - 1));
      }
    }
  }
  const NormalizedSample lin_back =
      resample_to_length(resample_to_length(lin, 2 * T), T);
  for (std::size_t i = 0; i < lin.parts[1].coords.size(); ++i) {
    CHECK(std::abs(lin_back.parts[1].coords[i] - lin.parts[1].coords[i]) < 1e-5);
  }

  // The 2T-1 grid contains every original frame, so arbitrary samples round
  // trip exactly.
  const NormalizedSample norm =
      normalize_sequence(random_sequence(11, 30), canonical_partitions(), 0.3);
  const NormalizedSample doubled = resample_to_length(norm, 2 * norm.num_frames - 1);
  const NormalizedSample back = resample_to_length(doubled, norm.num_frames);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t i = 0; i < norm.parts[p].mask.size(); ++i) {
      if (back.parts[p].mask[i] != 0.0f && norm.parts[p].mask[i] != 0.0f) {
        CHECK(std::abs(back.parts[p].coords[i * 2] - norm.parts[p].coords[i * 2]) < 1e-6);
        CHECK(std::abs(back.parts[p].coords[i * 2 + 1] - norm.parts[p].coords[i * 2 + 1]) < 1e-6);
      }
    }
  }
}

TEST_CASE("sample files round trip exactly") {
  const fs::path dir = temp_dir();
  const KeypointSequence seq = random_sequence(3);
  write_sample(dir / "raw.pslr", seq);
  const SampleVariant raw_back = read_sample(dir / "raw.pslr");
  REQUIRE(std::holds_alternative<KeypointSequence>(raw_back));
  const auto& rb = std::get<KeypointSequence>(raw_back);
  CHECK(rb.video_id == seq.video_id);
  CHECK(rb.gloss == seq.gloss);
  CHECK(rb.num_frames == seq.num_frames);
  CHECK(rb.data == seq.data);

  const NormalizedSample norm = normalize_sequence(seq, canonical_partitions(), 0.3);
  write_sample(dir / "norm.pslr", norm);
  const SampleVariant norm_back = read_sample(dir / "norm.pslr");
  REQUIRE(std::holds_alternative<NormalizedSample>(norm_back));
  const auto& nb = std::get<NormalizedSample>(norm_back);
  CHECK(nb.video_id == norm.video_id);
  CHECK(nb.gloss == norm.gloss);
  CHECK(nb.num_frames == norm.num_frames);
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(nb.parts[p].joints == norm.parts[p].joints);
    CHECK(nb.parts[p].coords == norm.parts[p].coords);
    CHECK(nb.parts[p].mask == norm.parts[p].mask);
  }
  fs::remove_all(dir);
}

TEST_CASE("corrupted files fail with distinct errors") {
  const fs::path dir = temp_dir();
  const KeypointSequence seq = random_sequence(4);
  const fs::path path = dir / "s.pslr";
  write_sample(path, seq);

  auto patch = [&](std::size_t offset, char value) {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(offset));
    f.put(value);
  };

  patch(0, 'X');
  CHECK_THROWS_WITH_AS(read_sample(path), doctest::Contains("bad magic"), DataError);
  write_sample(path, seq);
  patch(4, 9);  // version byte
  CHECK_THROWS_WITH_AS(read_sample(path), doctest::Contains("version"), DataError);

  write_sample(path, seq);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size / 2);
  CHECK_THROWS_WITH_AS(read_sample(path), doctest::Contains("truncated"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("manifest round trips, skips comments, and validates") {
  const fs::path dir = temp_dir();
  write_sample(dir / "a.pslr", random_sequence(1));
  write_sample(dir / "b.pslr", random_sequence(2));

  DatasetManifest m;
  m.base_dir = dir;
  m.entries = {{"a", "hello", Split::train, "a.pslr"}, {"b", "world", Split::test, "b.pslr"}};
  m.rebuild_vocabulary();
  m.save(dir / "manifest.tsv");

  const DatasetManifest loaded = DatasetManifest::load(dir / "manifest.tsv");
  REQUIRE(loaded.entries.size() == 2);
  CHECK(loaded.entries[0].video_id == "a");
  CHECK(loaded.entries[1].split == Split::test);
  CHECK(loaded.gloss_vocabulary == std::vector<std::string>{"hello", "world"});

  std::ofstream(dir / "dup.tsv") << "# comment\na\tg\ttrain\ta.pslr\na\tg\tval\tb.pslr\n";
  CHECK_THROWS_WITH_AS(DatasetManifest::load(dir / "dup.tsv"), doctest::Contains("duplicate"),
                       DataError);
  std::ofstream(dir / "missing.tsv") << "z\tg\ttrain\tnope.pslr\n";
  CHECK_THROWS_WITH_AS(DatasetManifest::load(dir / "missing.tsv"), doctest::Contains("missing"),
                       DataError);
  fs::remove_all(dir);
}

}  // TEST_SUITE
