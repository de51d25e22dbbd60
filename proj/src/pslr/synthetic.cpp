#include "pslr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pslr/errors.hpp"
#include "pslr/rng.hpp"

namespace pslr {

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct HandTemplate {
  double base_x, base_y;        // trajectory anchor
  double amp1x, amp1y, amp2x, amp2y;
  double ph1x, ph1y, ph2x, ph2y;
  double heading, heading_amp, heading_ph;
  double shape_scale;
  double finger_len[5];
};

struct ClassTemplate {
  HandTemplate hands[2];  // 0 = left, 1 = right
  double elbow_out[2];
  double sway_amp, sway_ph;
  double mouth_dy, mouth_w;
};

ClassTemplate make_template(std::uint64_t seed, std::size_t class_index) {
  Rng tr(derive_seed(seed, "template", class_index));
  ClassTemplate ct{};
  for (int h = 0; h < 2; ++h) {
    HandTemplate& ht = ct.hands[h];
    const double side = h == 0 ? -1.0 : 1.0;
    ht.base_x = 320.0 + side * 55.0 + tr.uniform(-25.0, 25.0);
    ht.base_y = 240.0 + tr.uniform(-30.0, 30.0);
    ht.amp1x = tr.uniform(25.0, 75.0);
    ht.amp1y = tr.uniform(25.0, 75.0);
    ht.amp2x = tr.uniform(10.0, 35.0);
    ht.amp2y = tr.uniform(10.0, 35.0);
    ht.ph1x = tr.uniform(0.0, kTwoPi);
    ht.ph1y = tr.uniform(0.0, kTwoPi);
    ht.ph2x = tr.uniform(0.0, kTwoPi);
    ht.ph2y = tr.uniform(0.0, kTwoPi);
    ht.heading = tr.uniform(-0.6, 0.6);
    ht.heading_amp = tr.uniform(0.0, 0.3);
    ht.heading_ph = tr.uniform(0.0, kTwoPi);
    ht.shape_scale = tr.uniform(0.8, 1.25);
    for (int f = 0; f < 5; ++f) ht.finger_len[f] = tr.uniform(0.7, 1.2);
    ct.elbow_out[h] = tr.uniform(10.0, 35.0);
  }
  ct.sway_amp = tr.uniform(0.0, 4.0);
  ct.sway_ph = tr.uniform(0.0, kTwoPi);
  ct.mouth_dy = tr.uniform(-3.0, 3.0);
  ct.mouth_w = tr.uniform(14.0, 22.0);
  return ct;
}

struct Pt {
  double x, y;
};

Pt wrist_at(const HandTemplate& ht, double u, double amp_jitter) {
  return {ht.base_x +
              amp_jitter * (ht.amp1x * std::sin(kTwoPi * u + ht.ph1x) +
                            ht.amp2x * std::sin(2.0 * kTwoPi * u + ht.ph2x)),
          ht.base_y +
              amp_jitter * (ht.amp1y * std::sin(kTwoPi * u + ht.ph1y) +
                            ht.amp2y * std::sin(2.0 * kTwoPi * u + ht.ph2y))};
}

// 20 finger joints relative to the wrist; finger f, segment g in 1..4.
Pt finger_offset(const HandTemplate& ht, double u, int f, int g) {
  const double heading =
      ht.heading + ht.heading_amp * std::sin(kTwoPi * u + ht.heading_ph);
  const double spread = -0.8 + 0.4 * f;       // fan of five fingers
  const double angle = heading + spread;
  double dist = (10.0 + 9.0 * g) * ht.shape_scale * ht.finger_len[f];
  if (f == 0) dist *= 0.78;  // thumb is shorter
  return {dist * std::sin(angle), -dist * std::cos(angle)};
}

// Static 68-landmark geometry around (cx, cy); landmark 30 is the nose tip.
Pt face_landmark(int i, double cx, double cy, const ClassTemplate& ct) {
  if (i <= 16) {  // jawline
    const double t = i / 16.0;
    return {cx + 30.0 * (2.0 * t - 1.0), cy + 8.0 + 22.0 * std::sin(3.14159265 * t)};
  }
  if (i <= 21) {  // right eyebrow
    const double t = (i - 17) / 4.0;
    return {cx - 24.0 + 16.0 * t, cy - 14.0 - 3.0 * std::sin(3.14159265 * t)};
  }
  if (i <= 26) {  // left eyebrow
    const double t = (i - 22) / 4.0;
    return {cx + 8.0 + 16.0 * t, cy - 14.0 - 3.0 * std::sin(3.14159265 * t)};
  }
  if (i <= 30) {  // nose bridge, tip at 30
    const double t = (i - 27) / 3.0;
    return {cx, cy - 8.0 + 14.0 * t};
  }
  if (i <= 35) {  // nose base
    const double t = (i - 31) / 4.0;
    return {cx - 7.0 + 14.0 * t, cy + 9.0};
  }
  if (i <= 41) {  // right eye ring
    const double a = kTwoPi * (i - 36) / 6.0;
    return {cx - 15.0 + 6.0 * std::cos(a), cy - 6.0 + 3.0 * std::sin(a)};
  }
  if (i <= 47) {  // left eye ring
    const double a = kTwoPi * (i - 42) / 6.0;
    return {cx + 15.0 + 6.0 * std::cos(a), cy - 6.0 + 3.0 * std::sin(a)};
  }
  if (i <= 59) {  // outer lip ring
    const double a = kTwoPi * (i - 48) / 12.0;
    return {cx + 0.5 * ct.mouth_w * std::cos(a), cy + 18.0 + ct.mouth_dy + 5.0 * std::sin(a)};
  }
  // inner lip ring
  const double a = kTwoPi * (i - 60) / 8.0;
  return {cx + 0.3 * ct.mouth_w * std::cos(a), cy + 18.0 + ct.mouth_dy + 2.5 * std::sin(a)};
}

}  // namespace

KeypointSequence synthesize_sequence(const SyntheticSpec& spec, std::size_t class_index,
                                     std::size_t sample_index) {
  const std::uint64_t sample_base = spec.sample_seed != 0 ? spec.sample_seed : spec.seed;
  const ClassTemplate ct = make_template(spec.seed, class_index);
  Rng sr(derive_seed(sample_base, "sample", class_index * 1000003ULL + sample_index));

  const std::size_t T = spec.t_min + sr.uniform_int(spec.t_max - spec.t_min + 1);
  const double gamma = std::exp(sr.uniform(-std::log(1.3), std::log(1.3)));
  const double amp_jitter = spec.noise_scale > 0.0 ? sr.uniform(0.9, 1.1) : 1.0;

  KeypointSequence seq;
  char id[32];
  std::snprintf(id, sizeof id, "c%03zu_s%03zu", class_index, sample_index);
  seq.video_id = id;
  char gl[16];
  std::snprintf(gl, sizeof gl, "g%03zu", class_index);
  seq.gloss = gl;
  seq.num_frames = T;
  seq.fps = spec.fps;
  seq.data.assign(T * kNumJoints * 3, 0.0f);

  std::vector<Pt> pos(kNumJoints);
  for (std::size_t t = 0; t < T; ++t) {
    const double u = std::pow(static_cast<double>(t) / static_cast<double>(T - 1), gamma);
    const double sway = ct.sway_amp * std::sin(kTwoPi * u + ct.sway_ph);

    pos[joint::kNose] = {320.0 + sway, 110.0};
    pos[1] = {308.0 + sway, 100.0};  // eyes
    pos[2] = {332.0 + sway, 100.0};
    pos[3] = {295.0 + sway, 105.0};  // ears
    pos[4] = {345.0 + sway, 105.0};
    pos[joint::kLeftShoulder] = {250.0 + sway, 170.0};
    pos[joint::kRightShoulder] = {390.0 + sway, 170.0};
    pos[joint::kLeftHip] = {275.0 + sway, 330.0};
    pos[joint::kRightHip] = {365.0 + sway, 330.0};
    pos[13] = {275.0, 400.0};  // knees
    pos[14] = {365.0, 400.0};
    pos[15] = {275.0, 460.0};  // ankles
    pos[16] = {365.0, 460.0};
    for (int f = 0; f < 6; ++f) {  // feet, unused by the partitions
      pos[17 + f] = {260.0 + 20.0 * f, 472.0};
    }

    for (int h = 0; h < 2; ++h) {
      const HandTemplate& ht = ct.hands[h];
      const Pt wrist = wrist_at(ht, u, amp_jitter);
      const int wrist_idx = h == 0 ? joint::kLeftWrist : joint::kRightWrist;
      const int shoulder_idx = h == 0 ? joint::kLeftShoulder : joint::kRightShoulder;
      const int elbow_idx = h == 0 ? joint::kLeftElbow : joint::kRightElbow;
      const int root_idx = h == 0 ? joint::kLeftHandRoot : joint::kRightHandRoot;
      const int finger_start = h == 0 ? joint::kLeftFingerStart : joint::kRightFingerStart;
      const double side = h == 0 ? -1.0 : 1.0;

      pos[wrist_idx] = wrist;
      pos[elbow_idx] = {0.5 * (pos[shoulder_idx].x + wrist.x) + side * ct.elbow_out[h],
                        0.5 * (pos[shoulder_idx].y + wrist.y) + 12.0};
      pos[root_idx] = wrist;  // duplicate hand-root keypoint
      for (int f = 0; f < 5; ++f) {
        for (int g = 1; g <= 4; ++g) {
          const Pt off = finger_offset(ht, u, f, g);
          pos[finger_start + f * 4 + (g - 1)] = {wrist.x + off.x, wrist.y + off.y};
        }
      }
    }

    for (int i = 0; i < 68; ++i) {
      pos[joint::kFaceStart + i] = face_landmark(i, 320.0 + sway, 115.0, ct);
    }

    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double nx = spec.coord_scale * (pos[j].x + spec.noise_scale * sr.normal()) +
                        spec.offset_x;
      const double ny = spec.coord_scale * (pos[j].y + spec.noise_scale * sr.normal()) +
                        spec.offset_y;
      double conf;
      if (sr.uniform() < spec.conf_dropout) {
        conf = sr.uniform(0.05, 0.25);
      } else {
        conf = std::clamp(0.9 + 0.06 * sr.normal(), 0.45, 1.0);
      }
      float* out = seq.joint(t, j);
      out[0] = static_cast<float>(nx);
      out[1] = static_cast<float>(ny);
      out[2] = static_cast<float>(conf);
    }
  }
  return seq;
}

DatasetManifest generate_synthetic_dataset(const SyntheticSpec& spec,
                                           const std::filesystem::path& out_dir) {
  if (spec.n_classes < 2) {
    throw ConfigError("synthetic dataset needs at least 2 classes, got " +
                      std::to_string(spec.n_classes));
  }
  if (spec.samples_per_class.size() != spec.n_classes) {
    throw ConfigError("samples_per_class has " + std::to_string(spec.samples_per_class.size()) +
                      " entries for " + std::to_string(spec.n_classes) + " classes");
  }
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    if (spec.samples_per_class[c] < 1) {
      throw ConfigError("samples_per_class[" + std::to_string(c) + "] must be >= 1");
    }
  }
  if (spec.t_min < 2 || spec.t_max < spec.t_min) {
    throw ConfigError("invalid frame-count range [" + std::to_string(spec.t_min) + ", " +
                      std::to_string(spec.t_max) + "]");
  }

  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.base_dir = out_dir;

  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const std::size_t n = spec.samples_per_class[c];
    std::size_t n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n))));
    n_train = std::min(n_train, n);
    const std::size_t rem = n - n_train;
    std::size_t n_val = std::min(
        rem, static_cast<std::size_t>(std::llround(spec.val_frac * static_cast<double>(n))));
    if (n >= 3 && rem >= 2 && n_val == 0) n_val = 1;
    if (n >= 3 && rem >= 2 && rem == n_val) n_val = rem - 1;  // keep one test sample
    if (rem >= 1 && n_val == rem && n_val > 0) n_val -= 1;    // prefer test over val

    for (std::size_t i = 0; i < n; ++i) {
      KeypointSequence seq = synthesize_sequence(spec, c, i);
      const std::string file = seq.video_id + ".pslr";
      write_sample(out_dir / file, seq);
      Split split = Split::test;
      if (i < n_train) {
        split = Split::train;
      } else if (i < n_train + n_val) {
        split = Split::val;
      }
      manifest.entries.push_back({seq.video_id, seq.gloss, split, file});
    }
  }
  manifest.rebuild_vocabulary();
  manifest.save(out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace pslr
