#pragma once
// Training loop: subgraph-size-sorted batching, per-step tape rebuild,
// cross-entropy over the entity vocabulary, Adamax under the warmup/decay
// schedule. Fixed seed implies a bit-reproducible loss curve.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgr3/context.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/model.hpp"
#include "kgr3/optim.hpp"

namespace kgr3 {

// A query with its leakage-stripped context; the context must not contain
// the gold triple or its inverse.
struct TrainInstance {
  Query query;
  SubgraphContext context;
};

// Indices of `instances` sorted ascending by subgraph token count (m+n),
// index as tie-break, sliced into contiguous batches.
inline std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<TrainInstance>& instances, std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     std::size_t sa = instances[a].context.nodes.size() +
                                      instances[a].context.edges.size();
                     std::size_t sb = instances[b].context.nodes.size() +
                                      instances[b].context.edges.size();
                     return sa < sb;
                   });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::size_t end = std::min(i + batch_size, order.size());
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double peak_lr = 1e-3;
  AdamaxConfig adamax;
  std::string loss_csv_path;         // optional "step,lr,loss" trace
  std::string checkpoint_dir;        // optional per-epoch checkpoints
};

struct StepRecord {
  std::size_t step;
  double lr;
  double loss;
};

// One pass over the sorted batches per epoch; gradients are averaged over
// the batch in instance order.
template <typename T>
std::vector<StepRecord> train(ModelParams<T>& params,
                              const std::vector<TrainInstance>& instances,
                              const TrainOptions& opts) {
  if (instances.empty())
    throw std::invalid_argument("train: no training instances");
  auto batches = make_batches(instances, opts.batch_size);
  const std::size_t total_steps = opts.epochs * batches.size();
  Adamax<T> optimizer(opts.adamax);
  std::vector<StepRecord> curve;
  std::ofstream csv;
  if (!opts.loss_csv_path.empty()) {
    csv.open(opts.loss_csv_path);
    if (!csv)
      throw std::runtime_error("cannot write " + opts.loss_csv_path);
    csv << "step,lr,loss\n";
  }
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (const auto& batch : batches) {
      ++step;
      Tape<T> tape;
      ReaderGraph<T> graph(tape, params);
      typename Tape<T>::Id total = -1;
      for (std::size_t idx : batch) {
        const auto& inst = instances[idx];
        if (!inst.query.gold_target)
          throw std::invalid_argument("train: instance has no gold target");
        auto fwd = graph.forward(inst.query, inst.context);
        auto l = graph.loss(fwd, *inst.query.gold_target);
        total = total < 0 ? l : tape.add(total, l);
      }
      auto mean_loss =
          tape.scale(total, T(1) / static_cast<T>(batch.size()));
      double loss_value =
          static_cast<double>(tape.value(mean_loss).at(0, 0));
      if (!std::isfinite(loss_value))
        throw std::runtime_error("non-finite loss at step " +
                                 std::to_string(step));
      tape.backward(mean_loss);

      std::map<std::string, Tensor<T>> grads;
      for (const auto& [name, tensor] : params.tensors)
        grads.emplace(name, graph.gradient(name));
      double lr = lr_schedule(step, total_steps, opts.peak_lr);
      optimizer.step(params.tensors, grads, lr);

      curve.push_back({step, lr, loss_value});
      if (csv.is_open()) {
        std::ostringstream row;
        row << step << ',' << std::setprecision(17) << lr << ','
            << loss_value;
        csv << row.str() << '\n';
      }
    }
    if (!opts.checkpoint_dir.empty())
      save_checkpoint(opts.checkpoint_dir + "/epoch_" +
                          std::to_string(epoch + 1) + ".ckpt",
                      params);
  }
  return curve;
}

}  // namespace kgr3
