#include "pslr/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "pslr/errors.hpp"
#include "pslr/kernels.hpp"
#include "pslr/rng.hpp"

namespace pslr {

BaselineModel BaselineModel::create(ModelPlan plan, std::vector<SkeletonGraph> graphs,
                                    const std::vector<std::string>& vocabulary,
                                    std::uint64_t seed) {
  if (vocabulary.empty()) throw DataError("baseline vocabulary is empty");
  BaselineModel model{ModelState::create(std::move(plan), std::move(graphs), seed), vocabulary,
                      0, 0};
  const std::size_t d = model.backbone.embedding_dim();
  const std::size_t v = vocabulary.size();
  model.head_w = model.backbone.params.add("head.w", d, v);
  model.head_b = model.backbone.params.add("head.b", 1, v);
  std::vector<InitRule> head_rules = {{model.head_w, InitKind::trunc_normal},
                                      {model.head_b, InitKind::zeros}};
  init_params(model.backbone.params, head_rules, derive_seed(seed, "head"));
  return model;
}

namespace {

int vocab_index(const std::vector<std::string>& vocab, const std::string& gloss) {
  const auto it = std::find(vocab.begin(), vocab.end(), gloss);
  return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
}

}  // namespace

void train_baseline(BaselineModel& model, const DatasetManifest& manifest,
                    const BaselineTrainOptions& opts) {
  const auto& ops = kern::active();
  ModelState& backbone = model.backbone;
  const std::size_t d = backbone.embedding_dim();
  const std::size_t v = model.vocabulary.size();

  std::vector<std::size_t> train_indices;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].split == Split::train) train_indices.push_back(i);
  }
  if (train_indices.empty()) throw DataError("train split is empty");

  std::unordered_map<std::size_t, NormalizedSample> cache;
  auto load = [&](std::size_t idx) -> const NormalizedSample& {
    auto it = cache.find(idx);
    if (it == cache.end()) {
      const ManifestEntry& entry = manifest.entries[idx];
      it = cache.emplace(idx, load_normalized(manifest.resolve(entry), opts.tau)).first;
    }
    return it->second;
  };

  AdamState adam(backbone.params.total(), opts.adam);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng rng(derive_seed(opts.seed, "baseline_epoch", epoch));
    std::vector<std::size_t> order = train_indices;
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      const std::size_t b = end - start;

      std::vector<EncoderInput> inputs;
      std::vector<int> labels;
      inputs.reserve(b);
      for (std::size_t i = start; i < end; ++i) {
        NormalizedSample sample = load(order[i]);
        if (opts.augment) {
          const double factor = opts.speed_factors[rng.uniform_int(opts.speed_factors.size())];
          sample = speed_augment(sample, factor);
        }
        sample = resample_to_length(sample, opts.frames);
        inputs.push_back(to_encoder_input(sample));
        const int label = vocab_index(model.vocabulary, manifest.entries[order[i]].gloss);
        if (label < 0) {
          throw DataError("train sample '" + manifest.entries[order[i]].video_id +
                          "' has gloss outside the head vocabulary");
        }
        labels.push_back(label);
      }

      // Forward (traced, sample-parallel with fixed assignment).
      std::vector<SampleTrace> traces(b);
      Mat emb(b, d);
      const std::size_t workers = std::min<std::size_t>(std::max(opts.threads, 1), b);
      auto parallel = [&](auto&& fn) {
        if (workers <= 1) {
          fn(std::size_t{0}, b, std::size_t{0});
          return;
        }
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (b + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
          const std::size_t lo = w * chunk;
          const std::size_t hi = std::min(b, lo + chunk);
          if (lo >= hi) break;
          pool.emplace_back([&, w, lo, hi] {
            try {
              fn(lo, hi, w);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      };

      parallel([&](std::size_t lo, std::size_t hi, std::size_t) {
        std::vector<double> z;
        for (std::size_t i = lo; i < hi; ++i) {
          embed_traced(backbone, inputs[i], z, traces[i]);
          std::copy(z.begin(), z.end(), emb.row(i));
        }
      });

      // Logits, softmax cross-entropy.
      ConstMatView w = backbone.params.view(model.head_w);
      ConstMatView bias = backbone.params.view(model.head_b);
      Mat logits(b, v);
      for (std::size_t i = 0; i < b; ++i) {
        std::copy(bias.ptr, bias.ptr + v, logits.row(i));
      }
      ops.gemm_nn(b, v, d, 1.0, emb.data(), d, w.ptr, v, 1.0, logits.data(), v);

      double batch_loss = 0.0;
      Mat dlogits(b, v);
      for (std::size_t i = 0; i < b; ++i) {
        double* row = logits.row(i);
        const double best = *std::max_element(row, row + v);
        double denom = 0.0;
        for (std::size_t c = 0; c < v; ++c) denom += std::exp(row[c] - best);
        const double log_denom = std::log(denom);
        batch_loss -= row[labels[i]] - best - log_denom;
        double* drow = dlogits.row(i);
        for (std::size_t c = 0; c < v; ++c) {
          const double p = std::exp(row[c] - best - log_denom);
          drow[c] = (p - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0)) /
                    static_cast<double>(b);
        }
      }
      batch_loss /= static_cast<double>(b);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train_baseline: non-finite loss at epoch " + std::to_string(epoch));
      }

      // Backward.
      std::vector<std::vector<double>> grads(workers,
                                             std::vector<double>(backbone.params.total(), 0.0));
      MatView dw = backbone.params.view_in(grads[0], model.head_w);
      MatView db = backbone.params.view_in(grads[0], model.head_b);
      ops.gemm_tn(d, v, b, 1.0, emb.data(), d, dlogits.data(), v, 1.0, dw.ptr, v);
      for (std::size_t i = 0; i < b; ++i) ops.axpy(v, 1.0, dlogits.row(i), db.ptr);
      Mat demb(b, d);
      ops.gemm_nt(b, d, v, 1.0, dlogits.data(), v, w.ptr, v, 0.0, demb.data(), d);

      const std::size_t chunk = (b + workers - 1) / workers;
      parallel([&](std::size_t lo, std::size_t hi, std::size_t wk) {
        (void)chunk;
        for (std::size_t i = lo; i < hi; ++i) {
          embed_backward(backbone, inputs[i], traces[i], demb.row(i), grads[wk]);
        }
      });
      std::vector<double>& grad = grads[0];
      for (std::size_t wk = 1; wk < workers; ++wk) {
        ops.axpy(grad.size(), 1.0, grads[wk].data(), grad.data());
      }
      for (double g : grad) {
        if (!std::isfinite(g)) {
          throw NumericError("train_baseline: non-finite gradient at epoch " +
                             std::to_string(epoch));
        }
      }
      adam.step(backbone.params.values(), grad);

      epoch_loss += batch_loss * static_cast<double>(b);
      epoch_samples += b;
    }
    if (opts.on_epoch) {
      opts.on_epoch(epoch, epoch_loss / static_cast<double>(epoch_samples));
    }
  }
}

EvalReport baseline_predict(const BaselineModel& model, const DatasetManifest& manifest,
                            Split split, const EvalOptions& opts) {
  const auto& ops = kern::active();
  const ModelState& backbone = model.backbone;
  const std::size_t d = backbone.embedding_dim();
  const std::size_t v = model.vocabulary.size();

  std::vector<EncoderInput> inputs;
  std::vector<std::string> video_ids;
  std::vector<int> labels;
  std::size_t dropped = 0;
  for (const ManifestEntry& entry : manifest.entries) {
    if (entry.split != split) continue;
    const int label = vocab_index(model.vocabulary, entry.gloss);
    if (label < 0) {
      ++dropped;
      continue;
    }
    NormalizedSample sample = load_normalized(manifest.resolve(entry), opts.tau);
    sample = resample_to_length(sample, opts.frames);
    inputs.push_back(to_encoder_input(sample));
    video_ids.push_back(entry.video_id);
    labels.push_back(label);
  }
  if (inputs.empty()) {
    throw DataError("no usable evaluation sample in split '" + std::string(split_name(split)) +
                    "' (every gloss outside the head vocabulary?)");
  }

  const Mat emb = embed_batch(backbone, inputs, opts.threads);
  ConstMatView w = backbone.params.view(model.head_w);
  ConstMatView bias = backbone.params.view(model.head_b);
  Mat logits(inputs.size(), v);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::copy(bias.ptr, bias.ptr + v, logits.row(i));
  }
  ops.gemm_nn(inputs.size(), v, d, 1.0, emb.data(), d, w.ptr, v, 1.0, logits.data(), v);

  EvalReport report;
  report.num_queries = inputs.size();
  report.dropped_queries = dropped;
  std::size_t max_k = 0;
  for (std::size_t k : opts.k_list) max_k = std::max(max_k, k);
  max_k = std::min(max_k, v);

  std::vector<std::size_t> correct_at(opts.k_list.size(), 0);
  std::vector<std::size_t> order(v);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    const double* row = logits.row(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    std::size_t rank_of_truth = v;
    for (std::size_t r = 0; r < v; ++r) {
      if (static_cast<int>(order[r]) == labels[i]) {
        rank_of_truth = r;
        break;
      }
    }
    for (std::size_t ki = 0; ki < opts.k_list.size(); ++ki) {
      if (rank_of_truth < opts.k_list[ki]) ++correct_at[ki];
    }
    PredictionRecord rec;
    rec.video_id = video_ids[i];
    rec.true_gloss = model.vocabulary[labels[i]];
    for (std::size_t r = 0; r < max_k; ++r) rec.ranked.push_back(model.vocabulary[order[r]]);
    report.records.push_back(std::move(rec));
    ClassAccuracy& ca = report.per_class[model.vocabulary[labels[i]]];
    ++ca.total;
    if (rank_of_truth == 0) ++ca.correct;
  }
  for (std::size_t ki = 0; ki < opts.k_list.size(); ++ki) {
    report.top_k.emplace_back(opts.k_list[ki], static_cast<double>(correct_at[ki]) /
                                                   static_cast<double>(report.num_queries));
  }
  return report;
}

EvalReport baseline_cross_predict(const BaselineModel& model, const DatasetManifest& target,
                                  Split target_split, const EvalOptions& opts) {
  const ModelState& backbone = model.backbone;
  const std::size_t d = backbone.embedding_dim();

  auto lower = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };

  std::vector<std::string> target_lower;
  for (const ManifestEntry& e : target.entries) {
    if (e.split == target_split) target_lower.push_back(lower(e.gloss));
  }
  std::sort(target_lower.begin(), target_lower.end());
  target_lower.erase(std::unique(target_lower.begin(), target_lower.end()), target_lower.end());

  std::vector<std::size_t> kept;  // head columns in the intersection
  for (std::size_t c = 0; c < model.vocabulary.size(); ++c) {
    if (std::binary_search(target_lower.begin(), target_lower.end(),
                           lower(model.vocabulary[c]))) {
      kept.push_back(c);
    }
  }
  if (kept.empty()) {
    throw DataError("empty gloss intersection between head vocabulary and target queries");
  }

  std::vector<EncoderInput> inputs;
  std::vector<std::string> video_ids;
  std::vector<int> labels;  // index into kept
  std::size_t dropped = 0;
  for (const ManifestEntry& entry : target.entries) {
    if (entry.split != target_split) continue;
    int label = -1;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (lower(model.vocabulary[kept[i]]) == lower(entry.gloss)) {
        label = static_cast<int>(i);
        break;
      }
    }
    if (label < 0) {
      ++dropped;
      continue;
    }
    NormalizedSample sample = load_normalized(target.resolve(entry), opts.tau);
    sample = resample_to_length(sample, opts.frames);
    inputs.push_back(to_encoder_input(sample));
    video_ids.push_back(entry.video_id);
    labels.push_back(label);
  }
  if (inputs.empty()) throw DataError("no target query matches the head vocabulary");

  const Mat emb = embed_batch(backbone, inputs, opts.threads);
  ConstMatView w = backbone.params.view(model.head_w);
  ConstMatView bias = backbone.params.view(model.head_b);
  const std::size_t n = kept.size();
  Mat logits(inputs.size(), n);
  // Column-sliced logits: z * W[:, kept] + b[kept].
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double* z = emb.row(i);
    for (std::size_t c = 0; c < n; ++c) {
      double acc = bias.ptr[kept[c]];
      for (std::size_t j = 0; j < d; ++j) acc += z[j] * w.ptr[j * w.cols + kept[c]];
      logits(i, c) = acc;
    }
  }

  EvalReport report;
  report.num_queries = inputs.size();
  report.dropped_queries = dropped;
  report.intersection_size = n;
  std::size_t max_k = 0;
  for (std::size_t k : opts.k_list) max_k = std::max(max_k, k);
  max_k = std::min(max_k, n);

  std::vector<std::size_t> correct_at(opts.k_list.size(), 0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    const double* row = logits.row(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    std::size_t rank_of_truth = n;
    for (std::size_t r = 0; r < n; ++r) {
      if (static_cast<int>(order[r]) == labels[i]) {
        rank_of_truth = r;
        break;
      }
    }
    for (std::size_t ki = 0; ki < opts.k_list.size(); ++ki) {
      if (rank_of_truth < opts.k_list[ki]) ++correct_at[ki];
    }
    PredictionRecord rec;
    rec.video_id = video_ids[i];
    rec.true_gloss = model.vocabulary[kept[labels[i]]];
    for (std::size_t r = 0; r < max_k; ++r) {
      rec.ranked.push_back(model.vocabulary[kept[order[r]]]);
    }
    ClassAccuracy& ca = report.per_class[rec.true_gloss];
    ++ca.total;
    if (rank_of_truth == 0) ++ca.correct;
    report.records.push_back(std::move(rec));
  }
  for (std::size_t ki = 0; ki < opts.k_list.size(); ++ki) {
    report.top_k.emplace_back(opts.k_list[ki], static_cast<double>(correct_at[ki]) /
                                                   static_cast<double>(report.num_queries));
  }
  return report;
}

}  // namespace pslr
