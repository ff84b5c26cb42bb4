#include "dot/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dot/error.hpp"
#include "dot/metrics.hpp"

namespace dot {

RmsPropState::RmsPropState(const SparseOctree& tree, const RmsPropConfig& config)
    : config_(config), stride_(tree.payload_stride()) {
  reset(tree);
}

void RmsPropState::reset(const SparseOctree& tree) {
  v_.assign(static_cast<std::size_t>(tree.capacity()) * stride_, 0.0);
}

double* RmsPropState::row(std::uint32_t index) {
  const std::size_t need = (static_cast<std::size_t>(index) + 1) * stride_;
  if (v_.size() < need) v_.resize(need, 0.0);
  return v_.data() + static_cast<std::size_t>(index) * stride_;
}

double RmsPropState::second_moment(std::uint32_t index, int component) const {
  const std::size_t at = static_cast<std::size_t>(index) * stride_ + component;
  return at < v_.size() ? v_[at] : 0.0;
}

void RmsPropState::set_second_moment(std::uint32_t index, int component, double value) {
  row(index)[component] = value;
}

void RmsPropState::step(SparseOctree& tree, const GradBuffer& grads) {
  if (grads.topology_version != tree.topology_version()) {
    throw StaleError("gradients were computed against another topology");
  }
  if (grads.stride != stride_) throw StaleError("gradient stride does not match the tree");
  if (grads.values.size() != grads.leaves.size() * static_cast<std::size_t>(stride_)) {
    throw PreconditionError("gradient buffer has a ragged value array");
  }
  const double decay = config_.decay;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const std::uint32_t leaf = grads.leaves[i];
    if (leaf >= tree.capacity() || !tree.slot_is_leaf(leaf)) {
      throw StaleError("gradient row for a node that is not a leaf");
    }
    const std::span<const double> g = grads.row(i);
    std::span<float> theta = tree.mutable_slot_payload(leaf);
    double* v = row(leaf);
    for (int k = 0; k < stride_; ++k) {
      v[k] = decay * v[k] + (1.0 - decay) * g[k] * g[k];
      const double lr = k == 0 ? config_.lr_sigma : config_.lr_sh;
      theta[k] = static_cast<float>(theta[k] - lr * g[k] / (std::sqrt(v[k]) + config_.epsilon));
    }
    theta[0] = std::max(theta[0], 0.0f);
  }
}

void RmsPropState::on_merge(const SparseOctree&, std::uint32_t parent,
                            const std::array<std::uint32_t, 8>& children) {
  std::uint32_t highest = parent;
  for (std::uint32_t c : children) highest = std::max(highest, c);
  row(highest);
  std::vector<double> mean(stride_, 0.0);
  for (std::uint32_t c : children) {
    const double* v = row(c);
    for (int k = 0; k < stride_; ++k) mean[k] += v[k];
  }
  double* out = row(parent);
  for (int k = 0; k < stride_; ++k) out[k] = mean[k] / kOctreeDegree;
  for (std::uint32_t c : children) std::fill_n(row(c), stride_, 0.0);
}

void RmsPropState::on_split(const SparseOctree&, std::uint32_t leaf,
                            const std::array<NodeId, 8>& children) {
  std::uint32_t highest = leaf;
  for (NodeId c : children) highest = std::max(highest, c.index);
  row(highest);
  for (NodeId c : children) std::copy_n(row(leaf), stride_, row(c.index));
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (interval < 1) throw ConfigError("interval must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (calibration.tau < 0.0) throw ConfigError("tau must be non-negative");
  if (calibration.gamma < 0.0) throw ConfigError("gamma must be non-negative");
  if (calibration.sample_mode == SampleMode::kTopK && calibration.gamma > 1.0) {
    throw ConfigError("top-k gamma must be in [0, 1]");
  }
  if (!(optimizer.decay >= 0.0 && optimizer.decay < 1.0)) throw ConfigError("decay must be in [0, 1)");
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,loss,psnr,leaf_count,event\n";
  char line[256];
  for (const EpochRecord& r : epochs) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%zu,%s\n", r.epoch, r.loss, r.psnr,
                  r.leaf_count, r.event.c_str());
    out << line;
  }
}

double train_epoch(SparseOctree& tree, const RayDataset& dataset, RmsPropState& state,
                   SignalBuffer& buffer, const TrainConfig& config, std::mt19937_64& rng) {
  const std::size_t n = dataset.size();
  if (n == 0) return 0.0;
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<Ray> rays;
  std::vector<Vec3> targets;
  double weighted_loss = 0.0;
  for (std::size_t start = 0; start < n; start += config.batch_size) {
    const std::size_t end = std::min(n, start + config.batch_size);
    rays.clear();
    targets.clear();
    for (std::size_t i = start; i < end; ++i) {
      rays.push_back(dataset.rays[order[i]]);
      targets.push_back(dataset.targets[order[i]]);
    }
    const BatchResult batch = render_and_backprop(tree, rays, targets, config.background,
                                                  config.render, config.workers);
    buffer.accumulate(batch.signal);
    state.step(tree, batch.grads);
    weighted_loss += batch.loss * static_cast<double>(end - start);
  }
  return weighted_loss / static_cast<double>(n);
}

TrainHistory train(SparseOctree& tree, const RayDataset& dataset, std::span<const View> holdout,
                   const TrainConfig& config) {
  config.validate();
  TrainHistory history;
  std::mt19937_64 rng(config.seed);
  SignalBuffer buffer(config.signal, tree);
  RmsPropState state(tree, config.optimizer);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.loss = train_epoch(tree, dataset, state, buffer, config, rng);
    if (epoch % config.interval == 0) {
      const CalibrationReport report = calibrate(
          tree, buffer, config.calibration, config.reset_optimizer_on_mutation ? nullptr : &state);
      if (config.reset_optimizer_on_mutation) state.reset(tree);
      buffer.reset(tree);
      history.calibrations.push_back(report);
      record.event = "calibrate";
    }
    record.leaf_count = tree.leaf_count();
    record.psnr = holdout.empty()
                      ? std::nan("")
                      : evaluate_views(tree, holdout, config.background, config.render,
                                       config.workers, false)
                            .psnr;
    history.epochs.push_back(std::move(record));
  }
  return history;
}

}  // namespace dot
