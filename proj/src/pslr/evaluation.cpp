#include "pslr/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "pslr/errors.hpp"
#include "pslr/kernels.hpp"
#include "pslr/rng.hpp"

namespace pslr {

double EvalReport::top(std::size_t k) const {
  for (const auto& [kk, acc] : top_k) {
    if (kk == k) return acc;
  }
  throw ConfigError("report has no top-" + std::to_string(k) + " entry");
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct EmbeddedSplit {
  std::vector<std::string> video_ids;
  std::vector<std::string> glosses;
  Mat embeddings;  // (M, D)
};

// Embeds every readable sample of a split (augmentation off, fixed length).
EmbeddedSplit embed_split(const ModelState& model, const DatasetManifest& manifest, Split split,
                          const EvalOptions& opts, bool skip_unreadable) {
  EmbeddedSplit out;
  std::vector<EncoderInput> inputs;
  for (const ManifestEntry& entry : manifest.entries) {
    if (entry.split != split) continue;
    try {
      NormalizedSample sample = load_normalized(manifest.resolve(entry), opts.tau);
      sample = resample_to_length(sample, opts.frames);
      inputs.push_back(to_encoder_input(sample));
    } catch (const DataError& e) {
      if (!skip_unreadable) throw;
      std::cerr << "warning: skipping sample '" << entry.video_id << "': " << e.what() << "\n";
      continue;
    }
    out.video_ids.push_back(entry.video_id);
    out.glosses.push_back(entry.gloss);
  }
  out.embeddings = embed_batch(model, inputs, opts.threads);
  return out;
}

Mat distance_matrix(const Mat& queries, const Mat& protos, DistanceMode mode) {
  const std::size_t q = queries.rows();
  const std::size_t n = protos.rows();
  const std::size_t d = queries.cols();
  Mat out(q, n);
  for (std::size_t r = 0; r < q; ++r) {
    const double* qrow = queries.row(r);
    double* orow = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      const double* prow = protos.row(c);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = qrow[j] - prow[j];
        acc += diff * diff;
      }
      orow[c] = mode == DistanceMode::unsquared ? std::sqrt(acc) : acc;
    }
  }
  return out;
}

EvalReport rank_and_score(const EmbeddedSplit& queries, const std::vector<std::size_t>& usable,
                          const std::vector<int>& true_class, const PrototypeDictionary& protos,
                          const EvalOptions& opts) {
  EvalReport report;
  report.num_queries = usable.size();

  std::size_t max_k = 0;
  for (std::size_t k : opts.k_list) max_k = std::max(max_k, k);
  max_k = std::min(max_k, protos.prototypes.rows());

  Mat queries_used(usable.size(), queries.embeddings.cols());
  for (std::size_t i = 0; i < usable.size(); ++i) {
    std::copy(queries.embeddings.row(usable[i]),
              queries.embeddings.row(usable[i]) + queries.embeddings.cols(),
              queries_used.row(i));
  }
  const Mat dist = distance_matrix(queries_used, protos.prototypes, opts.distance);

  std::vector<std::size_t> correct_at(opts.k_list.size(), 0);
  std::vector<std::size_t> order(protos.prototypes.rows());
  for (std::size_t i = 0; i < usable.size(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    const double* drow = dist.row(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return drow[a] < drow[b]; });

    std::size_t rank_of_truth = order.size();
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (static_cast<int>(order[r]) == true_class[i]) {
        rank_of_truth = r;
        break;
      }
    }
    for (std::size_t ki = 0; ki < opts.k_list.size(); ++ki) {
      if (rank_of_truth < opts.k_list[ki]) ++correct_at[ki];
    }

    PredictionRecord rec;
    rec.video_id = queries.video_ids[usable[i]];
    rec.true_gloss = protos.class_ids[true_class[i]];
    for (std::size_t r = 0; r < max_k; ++r) rec.ranked.push_back(protos.class_ids[order[r]]);
    report.records.push_back(std::move(rec));

    ClassAccuracy& ca = report.per_class[protos.class_ids[true_class[i]]];
    ++ca.total;
    if (rank_of_truth == 0) ++ca.correct;
  }

  for (std::size_t ki = 0; ki < opts.k_list.size(); ++ki) {
    report.top_k.emplace_back(opts.k_list[ki],
                              report.num_queries == 0
                                  ? 0.0
                                  : static_cast<double>(correct_at[ki]) /
                                        static_cast<double>(report.num_queries));
  }
  return report;
}

}  // namespace

PrototypeDictionary build_global_prototypes(const ModelState& model,
                                            const DatasetManifest& manifest, Split split,
                                            const EvalOptions& opts) {
  const EmbeddedSplit emb = embed_split(model, manifest, split, opts, /*skip_unreadable=*/true);
  if (emb.glosses.empty()) {
    throw DataError("no readable samples in split '" + std::string(split_name(split)) + "'");
  }

  std::vector<std::string> classes;
  for (const std::string& g : emb.glosses) classes.push_back(g);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  // Classes present in the manifest split but with no readable sample.
  for (const ManifestEntry& entry : manifest.entries) {
    if (entry.split != split) continue;
    if (!std::binary_search(classes.begin(), classes.end(), entry.gloss)) {
      throw DataError("class '" + entry.gloss + "' has no readable sample in split '" +
                      std::string(split_name(split)) + "'");
    }
  }

  const std::size_t d = emb.embeddings.cols();
  PrototypeDictionary dict;
  dict.class_ids = classes;
  dict.prototypes.resize(classes.size(), d);
  dict.support_counts.assign(classes.size(), 0);
  for (std::size_t i = 0; i < emb.glosses.size(); ++i) {
    const std::size_t c = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), emb.glosses[i]) - classes.begin());
    kern::active().axpy(d, 1.0, emb.embeddings.row(i), dict.prototypes.row(c));
    ++dict.support_counts[c];
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const double inv = 1.0 / static_cast<double>(dict.support_counts[c]);
    double* row = dict.prototypes.row(c);
    for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
  }
  return dict;
}

EvalReport evaluate_global(const ModelState& model, const PrototypeDictionary& protos,
                           const DatasetManifest& manifest, Split split, const EvalOptions& opts) {
  const EmbeddedSplit emb = embed_split(model, manifest, split, opts, /*skip_unreadable=*/true);
  if (emb.glosses.empty()) {
    throw DataError("evaluation split '" + std::string(split_name(split)) + "' is empty");
  }

  std::vector<std::size_t> usable;
  std::vector<int> true_class;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < emb.glosses.size(); ++i) {
    const auto it =
        std::find(protos.class_ids.begin(), protos.class_ids.end(), emb.glosses[i]);
    if (it == protos.class_ids.end()) {
      ++dropped;
      continue;
    }
    usable.push_back(i);
    true_class.push_back(static_cast<int>(it - protos.class_ids.begin()));
  }
  if (usable.empty()) {
    throw DataError("no evaluation query matches any prototype class");
  }

  EvalReport report = rank_and_score(emb, usable, true_class, protos, opts);
  report.dropped_queries = dropped;
  return report;
}

EvalReport cross_dataset_eval(const ModelState& model, const DatasetManifest& source,
                              Split source_split, const DatasetManifest& target,
                              Split target_split, const EvalOptions& opts) {
  PrototypeDictionary all = build_global_prototypes(model, source, source_split, opts);

  // Case-insensitive gloss intersection.
  std::vector<std::string> target_lower;
  for (const ManifestEntry& e : target.entries) {
    if (e.split == target_split) target_lower.push_back(lower(e.gloss));
  }
  std::sort(target_lower.begin(), target_lower.end());
  target_lower.erase(std::unique(target_lower.begin(), target_lower.end()), target_lower.end());

  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < all.class_ids.size(); ++c) {
    if (std::binary_search(target_lower.begin(), target_lower.end(), lower(all.class_ids[c]))) {
      kept.push_back(c);
    }
  }
  if (kept.empty()) {
    throw DataError("empty gloss intersection between source prototypes and target queries");
  }

  PrototypeDictionary protos;
  protos.prototypes.resize(kept.size(), all.prototypes.cols());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    protos.class_ids.push_back(all.class_ids[kept[i]]);
    protos.support_counts.push_back(all.support_counts[kept[i]]);
    std::copy(all.prototypes.row(kept[i]), all.prototypes.row(kept[i]) + all.prototypes.cols(),
              protos.prototypes.row(i));
  }

  const EmbeddedSplit emb =
      embed_split(model, target, target_split, opts, /*skip_unreadable=*/true);
  std::vector<std::size_t> usable;
  std::vector<int> true_class;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < emb.glosses.size(); ++i) {
    const std::string needle = lower(emb.glosses[i]);
    int match = -1;
    for (std::size_t c = 0; c < protos.class_ids.size(); ++c) {
      if (lower(protos.class_ids[c]) == needle) {
        match = static_cast<int>(c);
        break;
      }
    }
    if (match < 0) {
      ++dropped;
      continue;
    }
    usable.push_back(i);
    true_class.push_back(match);
  }
  if (usable.empty()) throw DataError("no target query matches the gloss intersection");

  EvalReport report = rank_and_score(emb, usable, true_class, protos, opts);
  report.dropped_queries = dropped;
  report.intersection_size = kept.size();
  return report;
}

std::vector<ConfusionPair> extract_confused_pairs(const EvalReport& report, std::size_t top_m) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const PredictionRecord& rec : report.records) {
    if (rec.ranked.empty() || rec.ranked.front() == rec.true_gloss) continue;
    std::string a = rec.true_gloss;
    std::string b = rec.ranked.front();
    if (b < a) std::swap(a, b);
    ++counts[{a, b}];
  }
  std::vector<ConfusionPair> pairs;
  for (const auto& [key, count] : counts) pairs.push_back({key.first, key.second, count});
  std::sort(pairs.begin(), pairs.end(), [](const ConfusionPair& x, const ConfusionPair& y) {
    if (x.count != y.count) return x.count > y.count;
    if (x.gloss_a != y.gloss_a) return x.gloss_a < y.gloss_a;
    return x.gloss_b < y.gloss_b;
  });
  if (pairs.size() > top_m) pairs.resize(top_m);
  return pairs;
}

PcaResult pca_project(const Mat& embeddings, std::size_t out_dims) {
  const std::size_t m = embeddings.rows();
  const std::size_t d = embeddings.cols();
  if (m < out_dims + 1) {
    throw DataError("pca_project: need at least " + std::to_string(out_dims + 1) +
                    " samples, got " + std::to_string(m));
  }

  Mat centered = embeddings;
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = centered.row(r);
    for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
  }
  for (std::size_t c = 0; c < d; ++c) mean[c] /= static_cast<double>(m);
  for (std::size_t r = 0; r < m; ++r) {
    double* row = centered.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] -= mean[c];
  }

  Mat cov(d, d);
  kern::active().gemm_tn(d, d, m, 1.0 / static_cast<double>(m > 1 ? m - 1 : 1), centered.data(),
                         d, centered.data(), d, 0.0, cov.data(), d);
  double trace = 0.0;
  for (std::size_t c = 0; c < d; ++c) trace += cov(c, c);

  PcaResult result;
  result.coords.resize(m, out_dims);
  result.explained.assign(out_dims, 0.0);
  if (trace <= 0.0) return result;  // all points identical

  std::vector<std::vector<double>> directions;
  for (std::size_t axis = 0; axis < out_dims; ++axis) {
    // Deterministic start vector, orthogonalized against found directions.
    std::vector<double> v(d, 0.0);
    Rng start(derive_seed(0x70ca0000ULL + axis, "pca_start"));
    for (std::size_t c = 0; c < d; ++c) v[c] = start.normal();

    auto orthonormalize = [&](std::vector<double>& x) -> bool {
      for (const auto& u : directions) {
        const double proj = kern::active().dot(d, x.data(), u.data());
        kern::active().axpy(d, -proj, u.data(), x.data());
      }
      const double norm = std::sqrt(kern::active().dot(d, x.data(), x.data()));
      if (norm < 1e-300) return false;
      for (double& xv : x) xv /= norm;
      return true;
    };

    if (!orthonormalize(v)) break;
    std::vector<double> next(d);
    double lambda = 0.0;
    for (int iter = 0; iter < 2000; ++iter) {
      kern::active().gemm_nn(d, 1, d, 1.0, cov.data(), d, v.data(), 1, 0.0, next.data(), 1);
      if (!orthonormalize(next)) {
        lambda = 0.0;
        break;
      }
      double delta = 0.0;
      for (std::size_t c = 0; c < d; ++c) delta = std::max(delta, std::abs(next[c] - v[c]));
      v = next;
      lambda = 0.0;
      kern::active().gemm_nn(d, 1, d, 1.0, cov.data(), d, v.data(), 1, 0.0, next.data(), 1);
      lambda = kern::active().dot(d, v.data(), next.data());
      if (delta < 1e-13) break;
    }

    if (lambda < 1e-12 * trace) break;  // null direction: ratio stays 0

    // Sign convention: largest-magnitude component positive.
    std::size_t arg = 0;
    for (std::size_t c = 1; c < d; ++c) {
      if (std::abs(v[c]) > std::abs(v[arg])) arg = c;
    }
    if (v[arg] < 0.0) {
      for (double& xv : v) xv = -xv;
    }

    for (std::size_t r = 0; r < m; ++r) {
      result.coords(r, axis) = kern::active().dot(d, centered.row(r), v.data());
    }
    result.explained[axis] = lambda / trace;
    directions.push_back(std::move(v));
  }
  return result;
}

// --- report files ---

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open report file '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out = open_csv(path);
  out << "k,accuracy\n";
  for (const auto& [k, acc] : report.top_k) {
    out << k << ',' << acc << '\n';
  }
}

void write_predictions_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out = open_csv(path);
  std::size_t width = 0;
  for (const auto& rec : report.records) width = std::max(width, rec.ranked.size());
  width = std::max<std::size_t>(width, 1);
  out << "video_id,true_gloss";
  for (std::size_t i = 1; i <= width; ++i) out << ",pred_" << i;
  out << '\n';
  for (const auto& rec : report.records) {
    out << csv_escape(rec.video_id) << ',' << csv_escape(rec.true_gloss);
    for (std::size_t i = 0; i < width; ++i) {
      out << ',' << (i < rec.ranked.size() ? csv_escape(rec.ranked[i]) : std::string());
    }
    out << '\n';
  }
}

void write_confusions_csv(const std::filesystem::path& path,
                          const std::vector<ConfusionPair>& pairs) {
  std::ofstream out = open_csv(path);
  out << "gloss_a,gloss_b,count\n";
  for (const auto& p : pairs) {
    out << csv_escape(p.gloss_a) << ',' << csv_escape(p.gloss_b) << ',' << p.count << '\n';
  }
}

void write_pca_csv(const std::filesystem::path& path, const std::vector<std::string>& video_ids,
                   const std::vector<std::string>& glosses, const PcaResult& pca) {
  std::ofstream out = open_csv(path);
  out << "video_id,gloss,x,y\n";
  for (std::size_t r = 0; r < pca.coords.rows(); ++r) {
    out << csv_escape(video_ids[r]) << ',' << csv_escape(glosses[r]) << ',' << pca.coords(r, 0)
        << ',' << (pca.coords.cols() > 1 ? pca.coords(r, 1) : 0.0) << '\n';
  }
}

std::string format_report_summary(const EvalReport& report) {
  std::ostringstream os;
  os << "queries: " << report.num_queries;
  if (report.dropped_queries > 0) os << " (dropped " << report.dropped_queries << ")";
  if (report.intersection_size > 0) os << ", gloss intersection: " << report.intersection_size;
  os << '\n';
  for (const auto& [k, acc] : report.top_k) {
    os << "  top-" << k << ": " << acc << '\n';
  }
  return os.str();
}

}  // namespace pslr
