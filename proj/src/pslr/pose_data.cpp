#include "pslr/pose_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "pslr/errors.hpp"

namespace pslr {

const char* partition_name(PartitionId id) {
  switch (id) {
    case PartitionId::body: return "body";
    case PartitionId::left_hand: return "left_hand";
    case PartitionId::right_hand: return "right_hand";
    case PartitionId::face: return "face";
  }
  return "?";
}

std::optional<std::size_t> PartitionSpec::anchor_row() const {
  if (!anchor_index) return std::nullopt;
  for (std::size_t r = 0; r < joint_indices.size(); ++r) {
    if (joint_indices[r] == *anchor_index) return r;
  }
  return std::nullopt;
}

const std::vector<PartitionSpec>& canonical_partitions() {
  static const std::vector<PartitionSpec> specs = [] {
    std::vector<PartitionSpec> out;
    PartitionSpec body;
    body.id = PartitionId::body;
    body.name = "body";
    body.joint_indices = {joint::kNose,      joint::kLeftShoulder, joint::kRightShoulder,
                          joint::kLeftElbow, joint::kRightElbow,   joint::kLeftWrist,
                          joint::kRightWrist};
    out.push_back(std::move(body));

    PartitionSpec lh;
    lh.id = PartitionId::left_hand;
    lh.name = "left_hand";
    lh.joint_indices.push_back(joint::kLeftWrist);
    for (int j = 0; j < 20; ++j) lh.joint_indices.push_back(joint::kLeftFingerStart + j);
    lh.anchor_index = joint::kLeftWrist;
    out.push_back(std::move(lh));

    PartitionSpec rh;
    rh.id = PartitionId::right_hand;
    rh.name = "right_hand";
    rh.joint_indices.push_back(joint::kRightWrist);
    for (int j = 0; j < 20; ++j) rh.joint_indices.push_back(joint::kRightFingerStart + j);
    rh.anchor_index = joint::kRightWrist;
    out.push_back(std::move(rh));

    PartitionSpec face;
    face.id = PartitionId::face;
    face.name = "face";
    for (int j = 0; j < 68; ++j) face.joint_indices.push_back(joint::kFaceStart + j);
    face.anchor_index = joint::kFaceNoseTip;
    out.push_back(std::move(face));
    return out;
  }();
  return specs;
}

void KeypointSequence::validate() const {
  if (num_frames < 1) throw DataError("keypoint sequence '" + video_id + "' has no frames");
  if (data.size() != num_frames * kNumJoints * 3) {
    throw DataError("keypoint sequence '" + video_id + "' has malformed storage: expected " +
                    std::to_string(num_frames * kNumJoints * 3) + " floats, got " +
                    std::to_string(data.size()));
  }
  if (!(fps > 0.0)) throw DataError("keypoint sequence '" + video_id + "' has non-positive fps");
  for (std::size_t t = 0; t < num_frames; ++t) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const float c = conf(t, j);
      if (!(c >= 0.0f && c <= 1.0f)) {
        throw DataError("keypoint sequence '" + video_id + "' has confidence outside [0,1] at t=" +
                        std::to_string(t) + " j=" + std::to_string(j));
      }
    }
  }
}

std::vector<FramePartition> partition_keypoints(std::span<const float> frame,
                                                const std::vector<PartitionSpec>& specs) {
  if (frame.size() != kNumJoints * 3) {
    throw DataError("partition_keypoints: expected " + std::to_string(kNumJoints) +
                    " joints (" + std::to_string(kNumJoints * 3) + " floats), got " +
                    std::to_string(frame.size() / 3) + " joints");
  }
  auto at = [&](int j, int c) { return static_cast<double>(frame[j * 3 + c]); };

  std::vector<FramePartition> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    FramePartition part;
    part.id = spec.id;
    const std::size_t jp = spec.output_joints();
    part.coords.resize(jp * 2);
    part.conf.resize(jp);
    std::size_t r = 0;
    for (int idx : spec.joint_indices) {
      part.coords[r * 2 + 0] = at(idx, 0);
      part.coords[r * 2 + 1] = at(idx, 1);
      part.conf[r] = at(idx, 2);
      ++r;
    }
    if (spec.id == PartitionId::body) {
      // Synthesized neck and mid-hip; confidence is the weaker parent.
      part.coords[r * 2 + 0] = 0.5 * (at(joint::kLeftShoulder, 0) + at(joint::kRightShoulder, 0));
      part.coords[r * 2 + 1] = 0.5 * (at(joint::kLeftShoulder, 1) + at(joint::kRightShoulder, 1));
      part.conf[r] = std::min(at(joint::kLeftShoulder, 2), at(joint::kRightShoulder, 2));
      ++r;
      part.coords[r * 2 + 0] = 0.5 * (at(joint::kLeftHip, 0) + at(joint::kRightHip, 0));
      part.coords[r * 2 + 1] = 0.5 * (at(joint::kLeftHip, 1) + at(joint::kRightHip, 1));
      part.conf[r] = std::min(at(joint::kLeftHip, 2), at(joint::kRightHip, 2));
      ++r;
    }
    out.push_back(std::move(part));
  }
  return out;
}

NormalizedSample normalize_sequence(const KeypointSequence& seq,
                                    const std::vector<PartitionSpec>& specs, double tau) {
  seq.validate();
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("confidence threshold tau must lie in (0,1), got " + std::to_string(tau));
  }

  const std::size_t T = seq.num_frames;
  std::vector<std::vector<FramePartition>> frames(T);
  for (std::size_t t = 0; t < T; ++t) {
    frames[t] = partition_keypoints(
        std::span<const float>(seq.data.data() + t * kNumJoints * 3, kNumJoints * 3), specs);
  }

  // Stage 1: one body box per video over confident body joints.
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_y;
  bool any_confident = false;
  for (std::size_t t = 0; t < T; ++t) {
    const FramePartition& body = frames[t][0];
    for (std::size_t j = 0; j < body.joints(); ++j) {
      if (body.conf[j] < tau) continue;
      any_confident = true;
      min_x = std::min(min_x, body.coords[j * 2 + 0]);
      max_x = std::max(max_x, body.coords[j * 2 + 0]);
      min_y = std::min(min_y, body.coords[j * 2 + 1]);
      max_y = std::max(max_y, body.coords[j * 2 + 1]);
    }
  }
  if (!any_confident) {
    throw DataError("normalize_sequence('" + seq.video_id +
                    "'): no body joint reaches the confidence threshold in any frame");
  }
  const double scale = std::max(max_x - min_x, max_y - min_y);
  if (scale <= 0.0) {
    throw DataError("normalize_sequence('" + seq.video_id +
                    "'): degenerate body bounding box (all confident body joints coincide)");
  }
  const double cx = 0.5 * (min_x + max_x);
  const double cy = 0.5 * (min_y + max_y);

  NormalizedSample out;
  out.video_id = seq.video_id;
  out.gloss = seq.gloss;
  out.num_frames = T;
  for (std::size_t p = 0; p < specs.size(); ++p) {
    const std::size_t jp = specs[p].output_joints();
    out.parts[p].joints = jp;
    out.parts[p].coords.assign(T * jp * 2, 0.0f);
    out.parts[p].mask.assign(T * jp, 0.0f);
  }

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < specs.size(); ++p) {
      FramePartition& part = frames[t][p];
      const std::size_t jp = part.joints();
      std::vector<double> scaled(jp * 2);
      for (std::size_t j = 0; j < jp; ++j) {
        scaled[j * 2 + 0] = 2.0 * (part.coords[j * 2 + 0] - cx) / scale;
        scaled[j * 2 + 1] = 2.0 * (part.coords[j * 2 + 1] - cy) / scale;
      }
      // Stage 2: relative centering at the partition anchor.
      if (auto row = specs[p].anchor_row()) {
        const double ax = scaled[*row * 2 + 0];
        const double ay = scaled[*row * 2 + 1];
        for (std::size_t j = 0; j < jp; ++j) {
          scaled[j * 2 + 0] -= ax;
          scaled[j * 2 + 1] -= ay;
        }
      }
      // Stage 3: gate on the original confidences.
      PartitionBlock& block = out.parts[p];
      for (std::size_t j = 0; j < jp; ++j) {
        if (part.conf[j] < tau) continue;  // stays zeroed/masked
        block.coords[(t * jp + j) * 2 + 0] = static_cast<float>(scaled[j * 2 + 0]);
        block.coords[(t * jp + j) * 2 + 1] = static_cast<float>(scaled[j * 2 + 1]);
        block.mask[t * jp + j] = 1.0f;
      }
    }
  }
  return out;
}

namespace {

NormalizedSample resample(const NormalizedSample& in, std::size_t t_out) {
  const std::size_t T = in.num_frames;
  if (T < 2) {
    throw DataError("resample('" + in.video_id + "'): need at least 2 frames, got " +
                    std::to_string(T));
  }
  NormalizedSample out;
  out.video_id = in.video_id;
  out.gloss = in.gloss;
  out.num_frames = t_out;
  for (std::size_t p = 0; p < kNumPartitions; ++p) {
    const PartitionBlock& src = in.parts[p];
    PartitionBlock& dst = out.parts[p];
    const std::size_t jp = src.joints;
    dst.joints = jp;
    dst.coords.assign(t_out * jp * 2, 0.0f);
    dst.mask.assign(t_out * jp, 0.0f);
    for (std::size_t tq = 0; tq < t_out; ++tq) {
      const double pos = static_cast<double>(tq) * static_cast<double>(T - 1) /
                         static_cast<double>(t_out - 1);
      std::size_t i0 = static_cast<std::size_t>(pos);
      if (i0 >= T - 1) i0 = T - 1;
      const double w = pos - static_cast<double>(i0);
      const std::size_t i1 = (w == 0.0) ? i0 : i0 + 1;
      for (std::size_t j = 0; j < jp; ++j) {
        const float m0 = src.mask[i0 * jp + j];
        const float m1 = src.mask[i1 * jp + j];
        if (m0 == 0.0f || m1 == 0.0f) continue;  // gated: zero coords, mask 0
        const double x0 = src.coords[(i0 * jp + j) * 2 + 0];
        const double x1 = src.coords[(i1 * jp + j) * 2 + 0];
        const double y0 = src.coords[(i0 * jp + j) * 2 + 1];
        const double y1 = src.coords[(i1 * jp + j) * 2 + 1];
        dst.coords[(tq * jp + j) * 2 + 0] = static_cast<float>((1.0 - w) * x0 + w * x1);
        dst.coords[(tq * jp + j) * 2 + 1] = static_cast<float>((1.0 - w) * y0 + w * y1);
        dst.mask[tq * jp + j] = 1.0f;
      }
    }
  }
  return out;
}

}  // namespace

NormalizedSample speed_augment(const NormalizedSample& sample, double factor) {
  if (!(factor > 0.0)) {
    throw ConfigError("speed_augment: factor must be positive, got " + std::to_string(factor));
  }
  const double t_raw = std::round(static_cast<double>(sample.num_frames) / factor);
  const std::size_t t_out = std::max<std::size_t>(2, static_cast<std::size_t>(t_raw));
  return resample(sample, t_out);
}

NormalizedSample resample_to_length(const NormalizedSample& sample, std::size_t t_target) {
  if (t_target < 2) {
    throw ConfigError("resample_to_length: target length must be >= 2, got " +
                      std::to_string(t_target));
  }
  return resample(sample, t_target);
}

// ---------------------------------------------------------------------------
// Sample files
//
// Layout (little-endian):
//   magic "PSLR" | u32 version=1 | u32 T | u32 J=133 | u8 kind
//   kind 0: T*J*3 float32 (x, y, conf) row-major over (t, j)
//   kind 1: four blocks in canonical partition order, each
//           u32 J_p | T*J_p*2 float32 coords | T*J_p float32 masks
//   then u32 length + gloss bytes, u32 length + video_id bytes
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'S', 'L', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
  std::ifstream in;
  std::filesystem::path path;

  explicit Reader(const std::filesystem::path& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw DataError("cannot open sample file '" + p.string() + "'");
  }

  void raw(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw DataError("truncated payload in sample file '" + path.string() + "'");
    }
  }

  std::uint32_t u32() {
    unsigned char b[4];
    raw(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }

  std::uint8_t u8() {
    unsigned char b;
    raw(&b, 1);
    return b;
  }

  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    if (n > 0) raw(s.data(), n);
    return s;
  }

  void f32_block(float* dst, std::size_t count) {
    raw(dst, count * 4);
    // Stored little-endian; byte-swap on big-endian hosts.
    if constexpr (std::endian::native == std::endian::big) {
      auto* bytes = reinterpret_cast<unsigned char*>(dst);
      for (std::size_t i = 0; i < count; ++i) {
        std::swap(bytes[i * 4 + 0], bytes[i * 4 + 3]);
        std::swap(bytes[i * 4 + 1], bytes[i * 4 + 2]);
      }
    }
  }
};

void write_f32_block(std::ostream& os, const float* src, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * 4));
  } else {
    for (std::size_t i = 0; i < count; ++i) put_f32(os, src[i]);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void write_sample(const std::filesystem::path& path, const KeypointSequence& seq) {
  seq.validate();
  std::ofstream out = open_out(path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(seq.num_frames));
  put_u32(out, static_cast<std::uint32_t>(kNumJoints));
  out.put(0);  // kind: raw
  write_f32_block(out, seq.data.data(), seq.data.size());
  put_string(out, seq.gloss);
  put_string(out, seq.video_id);
  if (!out) throw DataError("failed writing sample file '" + path.string() + "'");
}

void write_sample(const std::filesystem::path& path, const NormalizedSample& sample) {
  std::ofstream out = open_out(path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(sample.num_frames));
  put_u32(out, static_cast<std::uint32_t>(kNumJoints));
  out.put(1);  // kind: normalized
  for (const PartitionBlock& block : sample.parts) {
    put_u32(out, static_cast<std::uint32_t>(block.joints));
    write_f32_block(out, block.coords.data(), block.coords.size());
    write_f32_block(out, block.mask.data(), block.mask.size());
  }
  put_string(out, sample.gloss);
  put_string(out, sample.video_id);
  if (!out) throw DataError("failed writing sample file '" + path.string() + "'");
}

SampleVariant read_sample(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("bad magic in sample file '" + path.string() + "'");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("unsupported sample file version " + std::to_string(version) + " in '" +
                    path.string() + "' (expected " + std::to_string(kVersion) + ")");
  }
  const std::uint32_t T = r.u32();
  const std::uint32_t J = r.u32();
  if (J != kNumJoints) {
    throw DataError("sample file '" + path.string() + "' declares " + std::to_string(J) +
                    " joints, expected " + std::to_string(kNumJoints));
  }
  const std::uint8_t kind = r.u8();
  if (kind == 0) {
    KeypointSequence seq;
    seq.num_frames = T;
    seq.data.resize(static_cast<std::size_t>(T) * kNumJoints * 3);
    r.f32_block(seq.data.data(), seq.data.size());
    seq.gloss = r.str();
    seq.video_id = r.str();
    return seq;
  }
  if (kind == 1) {
    NormalizedSample sample;
    sample.num_frames = T;
    for (std::size_t p = 0; p < kNumPartitions; ++p) {
      PartitionBlock& block = sample.parts[p];
      block.joints = r.u32();
      block.coords.resize(static_cast<std::size_t>(T) * block.joints * 2);
      block.mask.resize(static_cast<std::size_t>(T) * block.joints);
      r.f32_block(block.coords.data(), block.coords.size());
      r.f32_block(block.mask.data(), block.mask.size());
    }
    sample.gloss = r.str();
    sample.video_id = r.str();
    return sample;
  }
  throw DataError("unknown sample kind " + std::to_string(kind) + " in '" + path.string() + "'");
}

NormalizedSample load_normalized(const std::filesystem::path& path, double tau) {
  SampleVariant v = read_sample(path);
  if (auto* raw = std::get_if<KeypointSequence>(&v)) {
    return normalize_sequence(*raw, canonical_partitions(), tau);
  }
  return std::get<NormalizedSample>(std::move(v));
}

// --- manifest ---

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "' (expected train|val|test)");
}

void DatasetManifest::rebuild_vocabulary() {
  std::set<std::string> glosses;
  for (const auto& e : entries) glosses.insert(e.gloss);
  gloss_vocabulary.assign(glosses.begin(), glosses.end());
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!ids.insert(e.video_id).second) {
      throw DataError("manifest has duplicate video_id '" + e.video_id + "'");
    }
    if (!std::filesystem::exists(resolve(e))) {
      throw DataError("manifest entry '" + e.video_id + "' points to missing file '" +
                      resolve(e).string() + "'");
    }
  }
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw DataError("manifest '" + path.string() + "' line " + std::to_string(line_no) +
                      ": expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    m.entries.push_back({fields[0], fields[1], parse_split(fields[2]), fields[3]});
  }
  m.rebuild_vocabulary();
  m.validate();
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open manifest '" + path.string() + "' for writing");
  out << "# video_id\tgloss\tsplit\tpath\n";
  for (const auto& e : entries) {
    out << e.video_id << '\t' << e.gloss << '\t' << split_name(e.split) << '\t' << e.path << '\n';
  }
  if (!out) throw DataError("failed writing manifest '" + path.string() + "'");
}

}  // namespace pslr
