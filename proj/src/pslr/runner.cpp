#include "pslr/runner.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "pslr/baseline.hpp"
#include "pslr/checkpoint.hpp"
#include "pslr/errors.hpp"
#include "pslr/evaluation.hpp"
#include "pslr/synthetic.hpp"

namespace pslr {

namespace {

namespace fs = std::filesystem;

fs::path prepare_out_dir(const RunConfig& config, const std::string& command) {
  if (config.out_dir.empty()) throw ConfigError("paths.out_dir is required");
  const fs::path dir(config.out_dir);
  fs::create_directories(dir);
  config.save(dir / "config.ini");
  std::ofstream prov(dir / "provenance.txt", std::ios::trunc);
  const std::time_t now = std::time(nullptr);
  char stamp[64] = "?";
  if (std::tm tm_buf{}; gmtime_r(&now, &tm_buf) != nullptr) {
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm_buf);
  }
  prov << "tool_version\t" << kToolVersion << "\n"
       << "command\t" << command << "\n"
       << "seed\t" << config.seed << "\n"
       << "started\t" << stamp << "\n";
  return dir;
}

DatasetManifest load_manifest(const std::string& path) {
  if (path.empty()) throw ConfigError("paths.manifest is required");
  return DatasetManifest::load(path);
}

EvalOptions eval_options(const RunConfig& config) {
  EvalOptions opts;
  opts.tau = config.tau;
  opts.frames = config.frames;
  opts.distance = config.distance;
  opts.threads = config.threads;
  opts.k_list = config.k_list;
  return opts;
}

std::vector<std::size_t> synthetic_counts(const RunConfig& config) {
  if (!config.counts.empty()) {
    if (config.counts.size() != config.classes) {
      throw ConfigError("data.counts lists " + std::to_string(config.counts.size()) +
                        " entries for " + std::to_string(config.classes) + " classes");
    }
    return config.counts;
  }
  std::vector<std::size_t> counts(config.classes, config.samples_per_class);
  if (config.shape == "geometric") {
    if (config.head_count < 1 || config.tail_count < 1) {
      throw ConfigError("data.head and data.tail must be >= 1");
    }
    const double head = static_cast<double>(config.head_count);
    const double tail = static_cast<double>(config.tail_count);
    for (std::size_t c = 0; c < config.classes; ++c) {
      const double frac = config.classes > 1
                              ? static_cast<double>(c) / static_cast<double>(config.classes - 1)
                              : 0.0;
      counts[c] = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(head * std::pow(tail / head, frac))));
    }
  } else if (config.shape != "uniform") {
    throw ConfigError("data.shape must be uniform or geometric");
  }
  return counts;
}

SyntheticSpec synthetic_spec(const RunConfig& config) {
  SyntheticSpec spec;
  spec.n_classes = config.classes;
  spec.samples_per_class = synthetic_counts(config);
  spec.t_min = config.t_min;
  spec.t_max = config.t_max;
  spec.noise_scale = config.noise;
  spec.seed = config.template_seed != 0 ? config.template_seed : config.seed;
  spec.sample_seed = config.sample_seed;
  spec.offset_x = config.offset_x;
  spec.offset_y = config.offset_y;
  spec.coord_scale = config.coord_scale;
  spec.conf_dropout = config.conf_dropout;
  spec.train_frac = config.train_frac;
  spec.val_frac = config.val_frac;
  return spec;
}

LoadedCheckpoint load_model_checkpoint(const RunConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("paths.checkpoint is required");
  return load_checkpoint(config.checkpoint);
}

void write_eval_artifacts(const fs::path& dir, const EvalReport& report) {
  write_metrics_csv(dir / "metrics.csv", report);
  write_predictions_csv(dir / "predictions.csv", report);
  std::cout << format_report_summary(report);
}

}  // namespace

int cmd_gen_synthetic(const RunConfig& config) {
  const fs::path dir = prepare_out_dir(config, "gen-synthetic");
  const SyntheticSpec spec = synthetic_spec(config);
  const DatasetManifest manifest = generate_synthetic_dataset(spec, dir);
  std::cout << "wrote " << manifest.entries.size() << " samples over " << config.classes
            << " classes to " << dir.string() << "\n";
  return 0;
}

int cmd_train_proto(const RunConfig& config, const std::string& resume_path) {
  const fs::path dir = prepare_out_dir(config, "train-proto");
  const DatasetManifest manifest = load_manifest(config.manifest);

  ModelState model;
  AdamState adam;
  TrainingMeta meta;
  if (!resume_path.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(resume_path);
    model = std::move(loaded.model);
    if (loaded.adam) {
      adam = std::move(*loaded.adam);
    } else {
      adam = AdamState(model.params.total(), config.adam);
    }
    meta = loaded.meta;
  } else {
    model = ModelState::create(config.make_plan(), canonical_graphs(), config.seed);
    adam = AdamState(model.params.total(), config.adam);
  }

  StreamOptions stream_opts;
  stream_opts.n_way = config.n_way;
  stream_opts.k_shot = config.k_shot;
  stream_opts.q_query = config.q_query;
  stream_opts.num_episodes = config.episodes;
  stream_opts.seed = config.seed;
  stream_opts.augment = config.augment;
  stream_opts.speed_factors = config.speed_factors;
  stream_opts.frames = model.plan.frames;
  stream_opts.tau = config.tau;
  EpisodeStream stream(manifest, Split::train, stream_opts);

  TrainStepOptions step_opts;
  step_opts.distance = config.distance;
  step_opts.threads = config.threads;

  bool has_val = false;
  for (const auto& e : manifest.entries) {
    if (e.split == Split::val) {
      has_val = true;
      break;
    }
  }
  if (!has_val) {
    std::cerr << "warning: manifest has no val split; periodic validation disabled\n";
  }

  const bool resuming = meta.episodes_done > 0;
  std::ofstream metrics(dir / "metrics.tsv", resuming ? std::ios::app : std::ios::trunc);
  std::ofstream val_log(dir / "validation.tsv", resuming ? std::ios::app : std::ios::trunc);
  if (!metrics || !val_log) throw DataError("cannot open training logs for writing");
  metrics << std::setprecision(17);

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  for (std::size_t e = static_cast<std::size_t>(meta.episodes_done); e < config.episodes; ++e) {
    const LoadedEpisode episode = stream.load(e);
    double loss = 0.0;
    try {
      loss = train_episode(model, episode.batch, adam, step_opts);
    } catch (const NumericError& err) {
      throw NumericError("episode " + std::to_string(e) + ": " + err.what());
    }
    metrics << e << '\t' << loss << '\t' << elapsed() << '\n';
    meta.episodes_done = static_cast<std::int64_t>(e) + 1;

    if (has_val && config.val_interval > 0 && (e + 1) % config.val_interval == 0) {
      const PrototypeDictionary protos =
          build_global_prototypes(model, manifest, Split::train, eval_options(config));
      const EvalReport report =
          evaluate_global(model, protos, manifest, Split::val, eval_options(config));
      const double top1 = report.top(1);
      val_log << (e + 1) << '\t' << top1 << '\n';
      val_log.flush();
      if (top1 > meta.best_val_top1) {
        meta.best_val_top1 = top1;
        save_checkpoint(dir / "checkpoint_best.pslc", model, &adam, &meta);
      }
    }
  }
  metrics.flush();
  save_checkpoint(dir / "checkpoint_final.pslc", model, &adam, &meta);
  std::cout << "trained through episode " << meta.episodes_done << "; final checkpoint at "
            << (dir / "checkpoint_final.pslc").string() << "\n";
  return 0;
}

int cmd_train_baseline(const RunConfig& config) {
  const fs::path dir = prepare_out_dir(config, "train-baseline");
  const DatasetManifest manifest = load_manifest(config.manifest);

  // Head vocabulary: train-split glosses in manifest vocabulary order.
  std::vector<std::string> vocab;
  for (const std::string& gloss : manifest.gloss_vocabulary) {
    for (const auto& e : manifest.entries) {
      if (e.split == Split::train && e.gloss == gloss) {
        vocab.push_back(gloss);
        break;
      }
    }
  }

  BaselineModel model =
      BaselineModel::create(config.make_plan(), canonical_graphs(), vocab, config.seed);

  std::ofstream metrics(dir / "metrics.tsv", std::ios::trunc);
  if (!metrics) throw DataError("cannot open training log for writing");
  metrics << std::setprecision(17);
  const auto start = std::chrono::steady_clock::now();

  BaselineTrainOptions opts;
  opts.epochs = config.baseline_epochs;
  opts.batch_size = config.baseline_batch;
  opts.adam = config.adam;
  opts.adam.lr = config.baseline_lr;
  opts.seed = config.seed;
  opts.augment = config.augment;
  opts.speed_factors = config.speed_factors;
  opts.frames = config.frames;
  opts.tau = config.tau;
  opts.threads = config.threads;
  opts.on_epoch = [&](std::size_t epoch, double loss) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    metrics << epoch << '\t' << loss << '\t' << wall << '\n';
  };
  train_baseline(model, manifest, opts);

  TrainingMeta meta;
  meta.episodes_done = static_cast<std::int64_t>(config.baseline_epochs);
  meta.note = "baseline";
  save_checkpoint(dir / "checkpoint_final.pslc", model.backbone, nullptr, &meta,
                  &model.vocabulary);
  std::cout << "baseline trained for " << config.baseline_epochs << " epochs; checkpoint at "
            << (dir / "checkpoint_final.pslc").string() << "\n";
  return 0;
}

namespace {

// Rebuilds a BaselineModel around a loaded checkpoint that carries a head.
BaselineModel to_baseline(LoadedCheckpoint&& loaded) {
  BaselineModel model{std::move(loaded.model), std::move(loaded.vocabulary), 0, 0};
  model.head_w = model.backbone.params.find("head.w");
  model.head_b = model.backbone.params.find("head.b");
  return model;
}

}  // namespace

int cmd_eval(const RunConfig& config) {
  const fs::path dir = prepare_out_dir(config, "eval");
  const DatasetManifest manifest = load_manifest(config.manifest);
  LoadedCheckpoint loaded = load_model_checkpoint(config);
  const Split split = parse_split(config.eval_split);

  EvalReport report;
  if (!loaded.vocabulary.empty()) {
    const BaselineModel model = to_baseline(std::move(loaded));
    report = baseline_predict(model, manifest, split, eval_options(config));
  } else {
    const PrototypeDictionary protos =
        build_global_prototypes(loaded.model, manifest, Split::train, eval_options(config));
    report = evaluate_global(loaded.model, protos, manifest, split, eval_options(config));
  }
  write_eval_artifacts(dir, report);
  return 0;
}

int cmd_eval_cross(const RunConfig& config) {
  const fs::path dir = prepare_out_dir(config, "eval-cross");
  const DatasetManifest source = load_manifest(config.manifest);
  if (config.target_manifest.empty()) throw ConfigError("paths.target_manifest is required");
  const DatasetManifest target = DatasetManifest::load(config.target_manifest);
  LoadedCheckpoint loaded = load_model_checkpoint(config);

  EvalReport report;
  if (!loaded.vocabulary.empty()) {
    const BaselineModel model = to_baseline(std::move(loaded));
    report = baseline_cross_predict(model, target, parse_split(config.target_split),
                                    eval_options(config));
  } else {
    report = cross_dataset_eval(loaded.model, source, parse_split(config.source_split), target,
                                parse_split(config.target_split), eval_options(config));
  }
  write_eval_artifacts(dir, report);
  return 0;
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

EvalReport report_from_predictions_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("predictions file is empty");
  EvalReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = parse_csv_line(line);
    if (fields.size() < 3) throw DataError("malformed predictions row: " + line);
    PredictionRecord rec;
    rec.video_id = fields[0];
    rec.true_gloss = fields[1];
    for (std::size_t i = 2; i < fields.size(); ++i) {
      if (!fields[i].empty()) rec.ranked.push_back(fields[i]);
    }
    report.records.push_back(std::move(rec));
  }
  report.num_queries = report.records.size();
  return report;
}

}  // namespace

int cmd_confusions(const RunConfig& config) {
  const fs::path dir = prepare_out_dir(config, "confusions");

  EvalReport report;
  if (!config.predictions.empty()) {
    report = report_from_predictions_csv(config.predictions);
  } else {
    const DatasetManifest manifest = load_manifest(config.manifest);
    LoadedCheckpoint loaded = load_model_checkpoint(config);
    const Split split = parse_split(config.eval_split);
    if (!loaded.vocabulary.empty()) {
      const BaselineModel model = to_baseline(std::move(loaded));
      report = baseline_predict(model, manifest, split, eval_options(config));
    } else {
      const PrototypeDictionary protos =
          build_global_prototypes(loaded.model, manifest, Split::train, eval_options(config));
      report = evaluate_global(loaded.model, protos, manifest, split, eval_options(config));
    }
  }
  const std::vector<ConfusionPair> pairs = extract_confused_pairs(report, config.confusion_top_m);
  write_confusions_csv(dir / "confusions.csv", pairs);
  std::cout << "wrote " << pairs.size() << " confusion pairs\n";
  return 0;
}

namespace {

void write_scatter_svg(const fs::path& path, const std::vector<std::string>& glosses,
                       const PcaResult& pca) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const double w = 800.0, h = 600.0, margin = 40.0;
  double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
  if (pca.coords.rows() > 0) {
    min_x = max_x = pca.coords(0, 0);
    min_y = max_y = pca.coords.cols() > 1 ? pca.coords(0, 1) : 0.0;
    for (std::size_t r = 1; r < pca.coords.rows(); ++r) {
      min_x = std::min(min_x, pca.coords(r, 0));
      max_x = std::max(max_x, pca.coords(r, 0));
      const double y = pca.coords.cols() > 1 ? pca.coords(r, 1) : 0.0;
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
  }
  const double sx = (w - 2 * margin) / std::max(1e-12, max_x - min_x);
  const double sy = (h - 2 * margin) / std::max(1e-12, max_y - min_y);

  std::vector<std::string> classes = glosses;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  auto color = [&](const std::string& g) {
    const std::size_t idx =
        std::lower_bound(classes.begin(), classes.end(), g) - classes.begin();
    const int hue = static_cast<int>((idx * 360) / std::max<std::size_t>(1, classes.size()));
    return "hsl(" + std::to_string(hue) + ",70%,45%)";
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t r = 0; r < pca.coords.rows(); ++r) {
    const double x = margin + (pca.coords(r, 0) - min_x) * sx;
    const double y =
        h - margin - ((pca.coords.cols() > 1 ? pca.coords(r, 1) : 0.0) - min_y) * sy;
    out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"" << color(glosses[r])
        << "\" fill-opacity=\"0.75\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace

int cmd_project(const RunConfig& config) {
  const fs::path dir = prepare_out_dir(config, "project");
  const DatasetManifest manifest = load_manifest(config.manifest);
  LoadedCheckpoint loaded = load_model_checkpoint(config);
  const Split split = parse_split(config.eval_split);
  const EvalOptions opts = eval_options(config);

  std::vector<EncoderInput> inputs;
  std::vector<std::string> video_ids, glosses;
  for (const ManifestEntry& entry : manifest.entries) {
    if (entry.split != split) continue;
    NormalizedSample sample = load_normalized(manifest.resolve(entry), opts.tau);
    sample = resample_to_length(sample, opts.frames);
    inputs.push_back(to_encoder_input(sample));
    video_ids.push_back(entry.video_id);
    glosses.push_back(entry.gloss);
  }
  if (inputs.empty()) throw DataError("projection split is empty");

  const Mat emb = embed_batch(loaded.model, inputs, opts.threads);
  const PcaResult pca = pca_project(emb, 2);
  write_pca_csv(dir / "pca.csv", video_ids, glosses, pca);
  if (config.render) write_scatter_svg(dir / "pca.svg", glosses, pca);
  std::cout << "explained variance:";
  for (double rates : pca.explained) std::cout << ' ' << rates;
  std::cout << '\n';
  return 0;
}

}  // namespace pslr
