#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dot/calibration.hpp"
#include "dot/dataset.hpp"
#include "dot/octree.hpp"
#include "dot/render.hpp"
#include "dot/signal.hpp"

namespace dot {

struct RmsPropConfig {
  double decay = 0.95;
  double epsilon = 1e-8;
  double lr_sigma = 0.1;
  double lr_sh = 0.01;
};

// Running mean of squared gradients per payload float, indexed by pool
// slot. Follows the tree through calibration: a merged parent takes the
// mean of its children, split children inherit their parent.
class RmsPropState : public StructureListener {
 public:
  RmsPropState(const SparseOctree& tree, const RmsPropConfig& config);

  const RmsPropConfig& config() const { return config_; }

  // v <- decay v + (1 - decay) g^2; theta <- theta - lr g / (sqrt(v) + eps)
  // for every leaf in `grads`; sigma is clamped to >= 0 afterwards. Throws
  // StaleError when the gradients were computed on another topology.
  void step(SparseOctree& tree, const GradBuffer& grads);

  // Zero every second moment (the alternative to remapping on mutation).
  void reset(const SparseOctree& tree);

  double second_moment(std::uint32_t index, int component) const;
  void set_second_moment(std::uint32_t index, int component, double value);

  void on_merge(const SparseOctree& tree, std::uint32_t parent,
                const std::array<std::uint32_t, 8>& children) override;
  void on_split(const SparseOctree& tree, std::uint32_t leaf,
                const std::array<NodeId, 8>& children) override;

 private:
  double* row(std::uint32_t index);

  RmsPropConfig config_;
  int stride_;
  std::vector<double> v_;
};

struct TrainConfig {
  int epochs = 100;
  int interval = 20;  // calibrate after every interval-th epoch
  CalibrationConfig calibration;
  RmsPropConfig optimizer;
  std::size_t batch_size = 4096;
  std::uint64_t seed = 0;
  SignalTarget signal = SignalTarget::kRayWeightQ;
  bool reset_optimizer_on_mutation = false;
  RenderOptions render;
  Vec3 background{1.0, 1.0, 1.0};
  int workers = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double psnr = 0.0;  // mean held-out PSNR after the epoch (and its calibration)
  std::size_t leaf_count = 0;
  std::string event;  // "calibrate" on calibration epochs
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<CalibrationReport> calibrations;

  // epoch,loss,psnr,leaf_count,event with round-trip precision.
  void write_csv(std::ostream& out) const;
};

// One pass over the shuffled rays: render, backprop, RMSProp step per
// batch, signal accumulated into `buffer`. Returns the mean ray MSE.
double train_epoch(SparseOctree& tree, const RayDataset& dataset, RmsPropState& state,
                   SignalBuffer& buffer, const TrainConfig& config, std::mt19937_64& rng);

// Interval training: config.epochs of train_epoch, calibrating after every
// config.interval-th epoch. Held-out PSNR is recorded per epoch only.
TrainHistory train(SparseOctree& tree, const RayDataset& dataset, std::span<const View> holdout,
                   const TrainConfig& config);

}  // namespace dot
