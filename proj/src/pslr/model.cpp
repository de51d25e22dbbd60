#include "pslr/model.hpp"

#include <thread>

#include "pslr/errors.hpp"

namespace pslr {

ModelState ModelState::create(ModelPlan plan, std::vector<SkeletonGraph> graphs,
                              std::uint64_t seed) {
  ModelState model;
  model.plan = std::move(plan);
  model.graphs = std::move(graphs);
  std::vector<InitRule> rules;
  model.enc = register_encoder_params(model.params, model.plan, model.graphs, rules);
  model.agg = register_aggregator_params(model.params, model.plan.embedding_dim, rules);
  init_params(model.params, rules, seed);
  return model;
}

void embed(const ModelState& model, const EncoderInput& input, std::vector<double>& z) {
  Mat z_seq;
  encoder_forward(model.params, model.enc, model.plan, model.graphs, input, z_seq, nullptr);
  aggregator_forward(model.params, model.agg, z_seq, z, nullptr);
}

void embed_traced(const ModelState& model, const EncoderInput& input, std::vector<double>& z,
                  SampleTrace& trace) {
  encoder_forward(model.params, model.enc, model.plan, model.graphs, input, trace.z_seq,
                  &trace.enc);
  aggregator_forward(model.params, model.agg, trace.z_seq, z, &trace.agg);
}

void embed_backward(const ModelState& model, const EncoderInput& input, const SampleTrace& trace,
                    const double* dz, std::vector<double>& grad) {
  Mat dz_seq;
  aggregator_backward(model.params, model.agg, trace.agg, dz, dz_seq, grad);
  encoder_backward(model.params, model.enc, model.plan, model.graphs, input, trace.enc, dz_seq,
                   grad);
}

Mat embed_batch(const ModelState& model, const std::vector<EncoderInput>& inputs, int threads) {
  const std::size_t m = inputs.size();
  Mat out(m, model.embedding_dim());
  if (m == 0) return out;
  const std::size_t workers =
      std::min<std::size_t>(std::max(threads, 1), m);

  auto worker = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> z;
    for (std::size_t i = lo; i < hi; ++i) {
      embed(model, inputs[i], z);
      std::copy(z.begin(), z.end(), out.row(i));
    }
  };

  if (workers <= 1) {
    worker(0, m);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (m + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(m, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, w, lo, hi] {
      try {
        worker(lo, hi);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace pslr
