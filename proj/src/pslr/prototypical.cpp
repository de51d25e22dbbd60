#include "pslr/prototypical.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "pslr/errors.hpp"
#include "pslr/kernels.hpp"

namespace pslr {

DistanceMode parse_distance_mode(const std::string& s) {
  if (s == "squared") return DistanceMode::squared;
  if (s == "unsquared") return DistanceMode::unsquared;
  throw ConfigError("unknown distance mode '" + s + "' (expected squared|unsquared)");
}

const char* distance_mode_name(DistanceMode m) {
  return m == DistanceMode::squared ? "squared" : "unsquared";
}

PrototypeDictionary compute_prototypes(const Mat& support, const std::vector<int>& labels,
                                       std::size_t n_classes) {
  if (support.rows() != labels.size()) {
    throw DataError("compute_prototypes: embeddings/labels size mismatch");
  }
  const std::size_t d = support.cols();
  PrototypeDictionary dict;
  dict.prototypes.resize(n_classes, d);
  dict.support_counts.assign(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes) {
      throw DataError("compute_prototypes: label " + std::to_string(c) + " outside [0, " +
                      std::to_string(n_classes) + ")");
    }
    kern::active().axpy(d, 1.0, support.row(i), dict.prototypes.row(c));
    ++dict.support_counts[c];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (dict.support_counts[c] == 0) {
      throw DataError("compute_prototypes: class " + std::to_string(c) + " has no support sample");
    }
    const double inv = 1.0 / static_cast<double>(dict.support_counts[c]);
    double* row = dict.prototypes.row(c);
    for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
  }
  dict.class_ids.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) dict.class_ids[c] = std::to_string(c);
  return dict;
}

namespace {

// Squared Euclidean distances, (Q, N).
Mat squared_distances(const Mat& queries, const Mat& prototypes) {
  const std::size_t q = queries.rows();
  const std::size_t n = prototypes.rows();
  const std::size_t d = queries.cols();
  if (prototypes.cols() != d) throw DataError("query/prototype dimension mismatch");
  Mat out(q, n);
  for (std::size_t r = 0; r < q; ++r) {
    const double* qrow = queries.row(r);
    double* orow = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      const double* prow = prototypes.row(c);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = qrow[j] - prow[j];
        acc += diff * diff;
      }
      orow[c] = acc;
    }
  }
  return out;
}

void log_softmax_rows_of_neg(Mat& dist, DistanceMode mode) {
  const std::size_t n = dist.cols();
  for (std::size_t r = 0; r < dist.rows(); ++r) {
    double* row = dist.row(r);
    if (mode == DistanceMode::unsquared) {
      for (std::size_t c = 0; c < n; ++c) row[c] = std::sqrt(row[c]);
    }
    // logits = -d; max-subtracted log softmax
    double best = -row[0];
    for (std::size_t c = 1; c < n; ++c) best = std::max(best, -row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < n; ++c) denom += std::exp(-row[c] - best);
    const double log_denom = std::log(denom);
    for (std::size_t c = 0; c < n; ++c) row[c] = -row[c] - best - log_denom;
  }
}

}  // namespace

Mat proto_log_probs(const Mat& queries, const Mat& prototypes, DistanceMode mode) {
  Mat out = squared_distances(queries, prototypes);
  log_softmax_rows_of_neg(out, mode);
  return out;
}

double episode_loss(const Mat& log_probs, const std::vector<int>& labels) {
  if (log_probs.rows() != labels.size()) throw DataError("episode_loss: size mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= log_probs.cols()) {
      throw DataError("episode_loss: label outside range");
    }
    total -= log_probs(r, y);
  }
  return total / static_cast<double>(labels.size());
}

double episode_loss_backward(const Mat& support, const std::vector<int>& support_labels,
                             const Mat& queries, const std::vector<int>& query_labels,
                             std::size_t n_classes, DistanceMode mode, Mat& d_support,
                             Mat& d_queries) {
  const auto& ops = kern::active();
  const std::size_t d = support.cols();
  const std::size_t q = queries.rows();

  PrototypeDictionary dict = compute_prototypes(support, support_labels, n_classes);
  Mat dist = squared_distances(queries, dict.prototypes);
  Mat log_probs = dist;
  log_softmax_rows_of_neg(log_probs, mode);
  const double loss = episode_loss(log_probs, query_labels);

  // dL/dd(r,c) = (1[c = y_r] - p(r,c)) / Q
  const double inv_q = 1.0 / static_cast<double>(q);
  Mat dd(q, n_classes);
  for (std::size_t r = 0; r < q; ++r) {
    const double* lp = log_probs.row(r);
    double* ddr = dd.row(r);
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double indicator = (static_cast<std::size_t>(query_labels[r]) == c) ? 1.0 : 0.0;
      ddr[c] = inv_q * (indicator - std::exp(lp[c]));
    }
    if (mode == DistanceMode::unsquared) {
      // d = sqrt(sq): chain through, guarding coincident points.
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double dist_rc = std::max(std::sqrt(dist(r, c)), 1e-12);
        ddr[c] *= 0.5 / dist_rc;
      }
    }
  }

  // sq(r,c) = |q_r - p_c|^2: dq_r += 2*dd(r,c)*(q_r - p_c); dp_c -= the same.
  d_queries.resize(q, d);
  Mat d_protos(n_classes, d);
  for (std::size_t r = 0; r < q; ++r) {
    const double* qrow = queries.row(r);
    double* dqrow = d_queries.row(r);
    double row_sum = 0.0;
    const double* ddr = dd.row(r);
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double g = 2.0 * ddr[c];
      row_sum += g;
      ops.axpy(d, -g, dict.prototypes.row(c), dqrow);
      double* dprow = d_protos.row(c);
      ops.axpy(d, -g, qrow, dprow);
      ops.axpy(d, g, dict.prototypes.row(c), dprow);
    }
    ops.axpy(d, row_sum, qrow, dqrow);
  }

  // Prototype mean spreads its gradient over the class support set.
  d_support.resize(support.rows(), d);
  for (std::size_t i = 0; i < support_labels.size(); ++i) {
    const int c = support_labels[i];
    const double inv = 1.0 / static_cast<double>(dict.support_counts[c]);
    ops.axpy(d, inv, d_protos.row(c), d_support.row(i));
  }
  return loss;
}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (m.size() != params.size()) throw NumericError("Adam state size mismatch");
  ++t;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  kern::active().adam_step(params.size(), params.data(), grad.data(), m.data(), v.data(), opts.lr,
                           opts.beta1, opts.beta2, opts.eps, bc1, bc2);
}

double train_episode(ModelState& model, const EpisodeBatch& batch, AdamState& adam,
                     const TrainStepOptions& opts) {
  const std::size_t d = model.embedding_dim();
  const std::size_t ns = batch.support.size();
  const std::size_t nq = batch.query.size();
  if (ns == 0 || nq == 0) throw DataError("train_episode: empty support or query set");

  // Encode with traces (support gradients flow through the prototypes).
  std::vector<SampleTrace> traces(ns + nq);
  Mat s_emb(ns, d), q_emb(nq, d);
  const std::size_t workers =
      std::min<std::size_t>(std::max(opts.threads, 1), ns + nq);

  auto encode_range = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> z;
    for (std::size_t i = lo; i < hi; ++i) {
      const bool is_support = i < ns;
      const EncoderInput& input = is_support ? batch.support[i] : batch.query[i - ns];
      embed_traced(model, input, z, traces[i]);
      std::copy(z.begin(), z.end(), is_support ? s_emb.row(i) : q_emb.row(i - ns));
    }
  };

  auto run_parallel = [&](auto&& fn) {
    if (workers <= 1) {
      fn(std::size_t{0}, ns + nq);
      return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t total = ns + nq;
    const std::size_t chunk = (total + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(total, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, w, lo, hi] {
        try {
          fn(lo, hi);
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

  run_parallel(encode_range);

  Mat d_support, d_queries;
  const double loss =
      episode_loss_backward(s_emb, batch.support_labels, q_emb, batch.query_labels,
                            batch.n_classes, opts.distance, d_support, d_queries);
  if (!std::isfinite(loss)) {
    throw NumericError("train_episode: non-finite loss");
  }

  // Per-worker gradient buffers reduced in fixed order keep updates
  // deterministic for a given thread count.
  std::vector<std::vector<double>> grads(workers, std::vector<double>(model.params.total(), 0.0));
  {
    const std::size_t total = ns + nq;
    const std::size_t chunk = (total + workers - 1) / workers;
    run_parallel([&](std::size_t lo, std::size_t hi) {
      const std::size_t w = lo / chunk;
      for (std::size_t i = lo; i < hi; ++i) {
        const bool is_support = i < ns;
        const EncoderInput& input = is_support ? batch.support[i] : batch.query[i - ns];
        const double* dz = is_support ? d_support.row(i) : d_queries.row(i - ns);
        embed_backward(model, input, traces[i], dz, grads[w]);
      }
    });
  }
  std::vector<double>& grad = grads[0];
  for (std::size_t w = 1; w < workers; ++w) {
    kern::active().axpy(grad.size(), 1.0, grads[w].data(), grad.data());
  }

  double max_abs = 0.0;
  bool finite = true;
  for (double g : grad) {
    if (!std::isfinite(g)) {
      finite = false;
      break;
    }
    max_abs = std::max(max_abs, std::abs(g));
  }
  if (!finite) {
    throw NumericError("train_episode: non-finite gradient (max |grad| before failure " +
                       std::to_string(max_abs) + ")");
  }

  adam.step(model.params.values(), grad);
  return loss;
}

}  // namespace pslr
