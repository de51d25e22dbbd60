#include "pslr/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pslr/errors.hpp"

namespace pslr {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected on/off, got '" + v + "'");
}

}  // namespace

ModelPlan RunConfig::make_plan() const {
  ModelPlan plan;
  if (plan_name == "paper") {
    plan = paper_plan();
  } else if (plan_name == "desk") {
    plan = desk_plan();
  } else {
    throw ConfigError("unknown model plan '" + plan_name + "' (expected paper|desk)");
  }
  if (embedding_dim != 0) plan.embedding_dim = embedding_dim;
  if (temporal_kernel != 0) plan.temporal_kernel = temporal_kernel;
  plan.frames = frames;
  auto widths_to_plan = [](const std::vector<std::size_t>& widths) {
    PartitionPlan pp;
    std::size_t in_ch = 2;
    for (std::size_t w : widths) {
      pp.blocks.push_back({in_ch, w});
      in_ch = w;
    }
    return pp;
  };
  if (!limb_channels.empty()) {
    const PartitionPlan limb = widths_to_plan(limb_channels);
    plan.partitions[0] = limb;
    plan.partitions[1] = limb;
    plan.partitions[2] = limb;
  }
  if (!face_channels.empty()) {
    plan.partitions[3] = widths_to_plan(face_channels);
  }
  plan.validate(kNumPartitions);
  return plan;
}

void RunConfig::validate() const {
  make_plan();
  if (n_way < 2) throw ConfigError("episodes.n_way must be >= 2");
  if (k_shot < 1) throw ConfigError("episodes.k_shot must be >= 1");
  if (q_query < 1) throw ConfigError("episodes.q_query must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("data.tau must lie in (0,1)");
  if (speed_factors.empty()) throw ConfigError("augmentation.factors must not be empty");
  for (double f : speed_factors) {
    if (!(f > 0.0)) throw ConfigError("augmentation.factors must be positive");
  }
  if (k_list.empty()) throw ConfigError("eval.k_list must not be empty");
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
  if (!(train_frac > 0.0)) throw ConfigError("data.train_frac must be > 0");
  if (train_frac + val_frac > 1.0) {
    throw ConfigError("data.train_frac + data.val_frac must be <= 1");
  }
  parse_split(eval_split);
  parse_split(source_split);
  parse_split(target_split);
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "paths.manifest") c.manifest = value;
    else if (key == "paths.out_dir") c.out_dir = value;
    else if (key == "paths.checkpoint") c.checkpoint = value;
    else if (key == "paths.target_manifest") c.target_manifest = value;
    else if (key == "paths.predictions") c.predictions = value;
    else if (key == "model.plan") c.plan_name = value;
    else if (key == "model.embedding_dim") c.embedding_dim = to_u64(key, value);
    else if (key == "model.frames") c.frames = to_u64(key, value);
    else if (key == "model.temporal_kernel") c.temporal_kernel = to_u64(key, value);
    else if (key == "model.distance") c.distance = parse_distance_mode(value);
    else if (key == "model.limb_channels") {
      c.limb_channels.clear();
      for (const std::string& item : split(value, ',')) {
        c.limb_channels.push_back(to_u64(key, item));
      }
    } else if (key == "model.face_channels") {
      c.face_channels.clear();
      for (const std::string& item : split(value, ',')) {
        c.face_channels.push_back(to_u64(key, item));
      }
    }
    else if (key == "episodes.n_way") c.n_way = to_u64(key, value);
    else if (key == "episodes.k_shot") c.k_shot = to_u64(key, value);
    else if (key == "episodes.q_query") c.q_query = to_u64(key, value);
    else if (key == "episodes.count") c.episodes = to_u64(key, value);
    else if (key == "optimizer.lr") c.adam.lr = to_double(key, value);
    else if (key == "optimizer.beta1") c.adam.beta1 = to_double(key, value);
    else if (key == "optimizer.beta2") c.adam.beta2 = to_double(key, value);
    else if (key == "optimizer.eps") c.adam.eps = to_double(key, value);
    else if (key == "augmentation.speed") c.augment = to_bool(key, value);
    else if (key == "augmentation.factors") {
      c.speed_factors.clear();
      for (const std::string& item : split(value, ',')) {
        c.speed_factors.push_back(to_double(key, item));
      }
    } else if (key == "data.tau") c.tau = to_double(key, value);
    else if (key == "data.classes") c.classes = to_u64(key, value);
    else if (key == "data.samples_per_class") c.samples_per_class = to_u64(key, value);
    else if (key == "data.counts") {
      c.counts.clear();
      for (const std::string& item : split(value, ',')) c.counts.push_back(to_u64(key, item));
    } else if (key == "data.shape") c.shape = value;
    else if (key == "data.head") c.head_count = to_u64(key, value);
    else if (key == "data.tail") c.tail_count = to_u64(key, value);
    else if (key == "data.t_min") c.t_min = to_u64(key, value);
    else if (key == "data.t_max") c.t_max = to_u64(key, value);
    else if (key == "data.noise") c.noise = to_double(key, value);
    else if (key == "data.template_seed") c.template_seed = to_u64(key, value);
    else if (key == "data.sample_seed") c.sample_seed = to_u64(key, value);
    else if (key == "data.offset_x") c.offset_x = to_double(key, value);
    else if (key == "data.offset_y") c.offset_y = to_double(key, value);
    else if (key == "data.coord_scale") c.coord_scale = to_double(key, value);
    else if (key == "data.conf_dropout") c.conf_dropout = to_double(key, value);
    else if (key == "data.train_frac") c.train_frac = to_double(key, value);
    else if (key == "data.val_frac") c.val_frac = to_double(key, value);
    else if (key == "eval.k_list") {
      c.k_list.clear();
      for (const std::string& item : split(value, ',')) c.k_list.push_back(to_u64(key, item));
    } else if (key == "eval.interval") c.val_interval = to_u64(key, value);
    else if (key == "eval.split") c.eval_split = value;
    else if (key == "eval.source_split") c.source_split = value;
    else if (key == "eval.target_split") c.target_split = value;
    else if (key == "eval.confusion_top_m") c.confusion_top_m = to_u64(key, value);
    else if (key == "eval.render") c.render = to_bool(key, value);
    else if (key == "baseline.epochs") c.baseline_epochs = to_u64(key, value);
    else if (key == "baseline.batch_size") c.baseline_batch = to_u64(key, value);
    else if (key == "baseline.lr") c.baseline_lr = to_double(key, value);
    else if (key == "run.seed") c.seed = to_u64(key, value);
    else if (key == "run.threads") c.threads = static_cast<int>(to_u64(key, value));
    else throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": malformed section");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (section.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": key outside any [section]");
    }
    kv[section + "." + key] = trim(t.substr(eq + 1));
  }
  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + ov + "' is not of the form section.key=value");
    }
    kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
  return from_map(kv);
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  auto join_d = [](const std::vector<double>& v) {
    std::ostringstream s;
    s.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  auto join_u = [](const std::vector<std::size_t>& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  os << "[paths]\n";
  os << "manifest = " << manifest << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "checkpoint = " << checkpoint << "\n";
  os << "target_manifest = " << target_manifest << "\n";
  os << "predictions = " << predictions << "\n";
  os << "\n[model]\n";
  os << "plan = " << plan_name << "\n";
  os << "embedding_dim = " << embedding_dim << "\n";
  os << "frames = " << frames << "\n";
  os << "temporal_kernel = " << temporal_kernel << "\n";
  os << "distance = " << distance_mode_name(distance) << "\n";
  if (!limb_channels.empty()) os << "limb_channels = " << join_u(limb_channels) << "\n";
  if (!face_channels.empty()) os << "face_channels = " << join_u(face_channels) << "\n";
  os << "\n[episodes]\n";
  os << "n_way = " << n_way << "\n";
  os << "k_shot = " << k_shot << "\n";
  os << "q_query = " << q_query << "\n";
  os << "count = " << episodes << "\n";
  os << "\n[optimizer]\n";
  os << "lr = " << adam.lr << "\n";
  os << "beta1 = " << adam.beta1 << "\n";
  os << "beta2 = " << adam.beta2 << "\n";
  os << "eps = " << adam.eps << "\n";
  os << "\n[augmentation]\n";
  os << "speed = " << (augment ? "on" : "off") << "\n";
  os << "factors = " << join_d(speed_factors) << "\n";
  os << "\n[data]\n";
  os << "tau = " << tau << "\n";
  os << "classes = " << classes << "\n";
  os << "samples_per_class = " << samples_per_class << "\n";
  if (!counts.empty()) os << "counts = " << join_u(counts) << "\n";
  os << "shape = " << shape << "\n";
  os << "head = " << head_count << "\n";
  os << "tail = " << tail_count << "\n";
  os << "t_min = " << t_min << "\n";
  os << "t_max = " << t_max << "\n";
  os << "noise = " << noise << "\n";
  os << "template_seed = " << template_seed << "\n";
  os << "sample_seed = " << sample_seed << "\n";
  os << "offset_x = " << offset_x << "\n";
  os << "offset_y = " << offset_y << "\n";
  os << "coord_scale = " << coord_scale << "\n";
  os << "conf_dropout = " << conf_dropout << "\n";
  os << "train_frac = " << train_frac << "\n";
  os << "val_frac = " << val_frac << "\n";
  os << "\n[eval]\n";
  os << "k_list = " << join_u(k_list) << "\n";
  os << "interval = " << val_interval << "\n";
  os << "split = " << eval_split << "\n";
  os << "source_split = " << source_split << "\n";
  os << "target_split = " << target_split << "\n";
  os << "confusion_top_m = " << confusion_top_m << "\n";
  os << "render = " << (render ? "on" : "off") << "\n";
  os << "\n[baseline]\n";
  os << "epochs = " << baseline_epochs << "\n";
  os << "batch_size = " << baseline_batch << "\n";
  os << "lr = " << baseline_lr << "\n";
  os << "\n[run]\n";
  os << "seed = " << seed << "\n";
  os << "threads = " << threads << "\n";
  return os.str();
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write config to '" + path.string() + "'");
  out << serialize();
}

}  // namespace pslr
