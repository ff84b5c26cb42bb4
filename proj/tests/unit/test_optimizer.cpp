#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "dot/error.hpp"
#include "dot/metrics.hpp"
#include "dot/optimizer.hpp"
#include "dot/toy_scene.hpp"
#include "oracles.hpp"

using namespace dot;

namespace {

const Cube kUnit{{0.0, 0.0, 0.0}, 1.0};
const Vec3 kWhite{1.0, 1.0, 1.0};

GradBuffer single_row(const SparseOctree& tree, std::uint32_t leaf, std::vector<double> row) {
  GradBuffer g;
  g.topology_version = tree.topology_version();
  g.stride = tree.payload_stride();
  g.leaves = {leaf};
  g.values = std::move(row);
  return g;
}

struct ToyRun {
  ToyDatasetSpec spec;
  ToyViews views;
  RayDataset train;
};

ToyRun toy_run(ToyKind kind, int views, int size) {
  ToyRun run;
  run.spec.scene.kind = kind;
  run.spec.train_views = views;
  run.spec.test_views = 3;
  run.spec.width = run.spec.height = size;
  run.views = make_toy_views(run.spec);
  run.train = RayDataset::from_views(run.views.train);
  return run;
}

// Field-initialized tree with its colors washed out, so training has work.
SparseOctree faded_tree(const ToySceneSpec& spec, int depth) {
  SparseOctree tree = generate_toy_scene(spec, depth).tree;
  for (const NodeId leaf : tree.leaves()) {
    std::span<float> p = tree.mutable_payload(leaf);
    for (std::size_t i = 1; i < p.size(); ++i) p[i] *= 0.3f;
  }
  return tree;
}

double dataset_loss(const SparseOctree& tree, const RayDataset& data) {
  return render_and_backprop(tree, data.rays, data.targets, kWhite, {false, 0.0}).loss;
}

}  // namespace

TEST_CASE("rmsprop hand evaluation") {
  SparseOctree tree(kUnit, 1);
  tree.mutable_payload(tree.root())[1] = 2.0f;
  RmsPropConfig cfg;
  cfg.decay = 0.9;
  cfg.lr_sh = 0.1;
  RmsPropState state(tree, cfg);
  state.step(tree, single_row(tree, 0, {0.0, 1.0, 0.0, 0.0}));
  CHECK(state.second_moment(0, 1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(tree.payload(tree.root())[1] == doctest::Approx(2.0 - 0.31622776).epsilon(1e-6));
  CHECK(tree.payload(tree.root())[1] ==
        static_cast<float>(2.0 - 0.1 / (std::sqrt(0.1) + 1e-8)));
}

TEST_CASE("zero gradient leaves payload and decays v") {
  SparseOctree tree(kUnit, 1);
  tree.set_payload(tree.root(), {0.5f, {0.1f, 0.2f, 0.3f}});
  RmsPropState state(tree, {});
  state.set_second_moment(0, 2, 4.0);
  state.step(tree, single_row(tree, 0, {0.0, 0.0, 0.0, 0.0}));
  CHECK(tree.leaf_payload(tree.root()) == LeafPayload{0.5f, {0.1f, 0.2f, 0.3f}});
  CHECK(state.second_moment(0, 2) == doctest::Approx(0.95 * 4.0));
}

TEST_CASE("density is clamped at zero") {
  SparseOctree tree(kUnit, 1);
  tree.mutable_payload(tree.root())[0] = 0.01f;
  RmsPropState state(tree, {});
  state.step(tree, single_row(tree, 0, {1000.0, 0.0, 0.0, 0.0}));
  CHECK(tree.payload(tree.root())[0] == 0.0f);
}

TEST_CASE("stale gradients are rejected") {
  SparseOctree tree(kUnit, 1);
  RmsPropState state(tree, {});
  const GradBuffer g = single_row(tree, 0, {1.0, 0.0, 0.0, 0.0});
  tree.split_leaf(tree.root());
  CHECK_THROWS_AS(state.step(tree, g), StaleError);
  GradBuffer wrong = single_row(tree, 1, {1.0, 0.0});
  CHECK_THROWS_AS(state.step(tree, wrong), PreconditionError);
  wrong.stride = 2;
  CHECK_THROWS_AS(state.step(tree, wrong), StaleError);
  CHECK_THROWS_AS(state.step(tree, single_row(tree, 0, {1.0, 0.0, 0.0, 0.0})), StaleError);
}

TEST_CASE("only leaves with gradient rows change") {
  SparseOctree tree = testing::random_tree(2, 2, 4, kUnit, 1.0);
  const SparseOctree before = tree;
  std::vector<Ray> rays{{{0.3, 0.4, -3.0}, {0.0, 0.0, 1.0}}};
  std::vector<Vec3> targets{{0.1, 0.9, 0.2}};
  const BatchResult res = render_and_backprop(tree, rays, targets, kWhite);
  RmsPropState state(tree, {});
  state.step(tree, res.grads);
  for (const NodeId leaf : tree.leaves()) {
    const bool touched = !res.grads.find(leaf.index).empty();
    const auto a = tree.payload(leaf);
    const auto b = before.slot_payload(leaf.index);
    CHECK(std::equal(a.begin(), a.end(), b.begin()) == !touched);
  }
}

TEST_CASE("second moments follow merges and splits") {
  SparseOctree tree(kUnit, 1);
  RmsPropState state(tree, {});
  state.set_second_moment(0, 0, 3.0);
  const auto kids = tree.split_leaf(tree.root());
  state.on_split(tree, 0, kids);
  for (const NodeId k : kids) CHECK(state.second_moment(k.index, 0) == 3.0);
  std::array<std::uint32_t, 8> idx;
  for (int i = 0; i < 8; ++i) {
    idx[i] = kids[i].index;
    state.set_second_moment(idx[i], 1, static_cast<double>(i));
  }
  tree.merge_children(tree.root());
  state.on_merge(tree, 0, idx);
  CHECK(state.second_moment(0, 1) == doctest::Approx(3.5));
  CHECK(state.second_moment(0, 0) == doctest::Approx(3.0));
  for (std::uint32_t i : idx) CHECK(state.second_moment(i, 1) == 0.0);
}

TEST_CASE("perfect fit: zero-density tree against background targets") {
  SparseOctree tree = build_dense(2, kUnit, 1, constant_payload({0.0f, {0.2f, 0.1f, -0.3f}}));
  const SparseOctree before = tree;
  std::vector<View> views;
  for (const Camera& c : orbit_cameras(2, 3.0, 16, 16, 0.7)) views.push_back({c, Image(16, 16, 1.0f)});
  const RayDataset data = RayDataset::from_views(views);
  TrainConfig cfg;
  RmsPropState state(tree, cfg.optimizer);
  SignalBuffer buffer(cfg.signal, tree);
  std::mt19937_64 rng(0);
  CHECK(train_epoch(tree, data, state, buffer, cfg, rng) == 0.0);
  CHECK(testing::trees_identical(tree, before));
}

TEST_CASE("fixed-structure epochs reduce the loss") {
  ToyRun run = toy_run(ToyKind::kSolidSphere, 6, 24);
  SparseOctree tree = faded_tree(run.spec.scene, 4);
  TrainConfig cfg;
  cfg.batch_size = 1024;
  RmsPropState state(tree, cfg.optimizer);
  SignalBuffer buffer(cfg.signal, tree);
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> losses;
  for (int e = 0; e < 5; ++e) losses.push_back(train_epoch(tree, run.train, state, buffer, cfg, rng));
  for (std::size_t i = 1; i < losses.size(); ++i) {
    INFO("epoch " << i << " " << losses[i - 1] << " -> " << losses[i]);
    CHECK(losses[i] <= 1.05 * losses[i - 1]);
  }
  CHECK(losses.back() < losses.front());
}

TEST_CASE("training is deterministic for a seed and any worker count") {
  ToyRun run = toy_run(ToyKind::kCheckerSphere, 4, 20);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.interval = 2;
  cfg.batch_size = 500;
  cfg.seed = 42;
  cfg.calibration = {0.5, 0.05, true};
  SparseOctree base = faded_tree(run.spec.scene, 3);
  SparseOctree a = base, b = base;
  const TrainHistory ha = train(a, run.train, run.views.test, cfg);
  cfg.workers = 6;
  const TrainHistory hb = train(b, run.train, run.views.test, cfg);
  CHECK(testing::trees_identical(a, b));
  std::stringstream sa, sb;
  ha.write_csv(sa);
  hb.write_csv(sb);
  CHECK(sa.str() == sb.str());
  CHECK(ha.calibrations.size() == 2);

  cfg.seed = 43;
  SparseOctree c = base;
  train(c, run.train, run.views.test, cfg);
  CHECK_FALSE(testing::trees_identical(a, c));
}

TEST_CASE("history format and calibration cadence") {
  ToyRun run = toy_run(ToyKind::kSolidSphere, 2, 16);
  SparseOctree tree = faded_tree(run.spec.scene, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.interval = 5;
  const TrainHistory h = train(tree, run.train, run.views.test, cfg);
  CHECK(h.calibrations.empty());
  REQUIRE(h.epochs.size() == 4);
  for (const EpochRecord& r : h.epochs) {
    CHECK(r.event.empty());
    CHECK(std::isfinite(r.psnr));
  }
  std::stringstream ss;
  h.write_csv(ss);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "epoch,loss,psnr,leaf_count,event");

  cfg.epochs = 0;
  const TrainHistory empty = train(tree, run.train, run.views.test, cfg);
  CHECK(empty.epochs.empty());
  cfg.epochs = 1;
  const TrainHistory no_holdout = train(tree, run.train, {}, cfg);
  CHECK(std::isnan(no_holdout.epochs[0].psnr));
}

TEST_CASE("configuration validation") {
  TrainConfig cfg;
  cfg.interval = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.calibration.gamma = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.calibration.sample_mode = SampleMode::kThreshold;
  CHECK_NOTHROW(cfg.validate());
  cfg = {};
  cfg.optimizer.decay = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sampling leaves the training loss unchanged") {
  ToyRun run = toy_run(ToyKind::kCheckerSphere, 4, 24);
  SparseOctree tree = faded_tree(run.spec.scene, 4);
  TrainConfig cfg;
  cfg.batch_size = 2048;
  RmsPropState state(tree, cfg.optimizer);
  SignalBuffer buffer(cfg.signal, tree);
  std::mt19937_64 rng(cfg.seed);
  train_epoch(tree, run.train, state, buffer, cfg, rng);
  prune(tree, buffer, 1.0, false, &state);
  const double before = dataset_loss(tree, run.train);
  const CalibrationReport r = sample(tree, buffer, 0.05, SampleMode::kTopK, &state);
  CHECK(r.splits_applied > 0);
  CHECK(std::abs(dataset_loss(tree, run.train) - before) <= 1e-6);
}

TEST_CASE("prune-only training shrinks monotonically without losing quality") {
  ToyRun run = toy_run(ToyKind::kSolidSphere, 8, 24);
  const SparseOctree base = faded_tree(run.spec.scene, 4);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.interval = 1;
  cfg.batch_size = 2048;
  cfg.calibration = {1.0, 0.0, false};
  SparseOctree pruned = base;
  const TrainHistory h = train(pruned, run.train, run.views.test, cfg);
  REQUIRE(h.calibrations.size() == 10);
  for (std::size_t i = 1; i < h.epochs.size(); ++i) {
    CHECK(h.epochs[i].leaf_count <= h.epochs[i - 1].leaf_count);
  }
  for (const CalibrationReport& r : h.calibrations) CHECK(r.splits_applied == 0);
  CHECK(pruned.leaf_count() * 2 <= base.leaf_count());

  SparseOctree control = base;
  TrainConfig fixed = cfg;
  fixed.interval = cfg.epochs + 1;
  const TrainHistory hc = train(control, run.train, run.views.test, fixed);
  CHECK(h.epochs.back().psnr >= hc.epochs.back().psnr - 0.1);
}

TEST_CASE("training PSNR holds up across each stabilization window") {
  ToyRun run = toy_run(ToyKind::kCheckerSphere, 6, 24);
  SparseOctree tree = faded_tree(run.spec.scene, 4);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.interval = 4;
  cfg.batch_size = 2048;
  cfg.calibration = {1.0, 0.02, false};
  const TrainHistory h = train(tree, run.train, run.views.train, cfg);
  for (int w = 0; w * cfg.interval < cfg.epochs; ++w) {
    const double start = h.epochs[w * cfg.interval].psnr;
    const double end = h.epochs[w * cfg.interval + cfg.interval - 2].psnr;
    CHECK(end >= start - 0.05);
  }
}

TEST_CASE("optimizer reset flag zeroes state at calibration") {
  ToyRun run = toy_run(ToyKind::kSolidSphere, 3, 16);
  SparseOctree a = faded_tree(run.spec.scene, 3), b = a;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.interval = 1;
  cfg.calibration = {0.5, 0.05, false};
  const TrainHistory ha = train(a, run.train, run.views.test, cfg);
  cfg.reset_optimizer_on_mutation = true;
  const TrainHistory hb = train(b, run.train, run.views.test, cfg);
  CHECK(ha.epochs[0].loss == hb.epochs[0].loss);
  CHECK(ha.epochs[2].loss != hb.epochs[2].loss);
}

TEST_CASE("full calibration beats an uncalibrated control of at least equal size") {
  ToyRun run = toy_run(ToyKind::kSolidSphere, 8, 32);
  const SparseOctree base = faded_tree(run.spec.scene, 4);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.interval = 20;
  cfg.batch_size = 512;
  cfg.calibration = {1.0, 0.05, false};
  SparseOctree tree = base;
  const TrainHistory h = train(tree, run.train, run.views.test, cfg);

  // The smallest uniform tree with at least as many leaves.
  int depth = 0;
  while ((std::size_t{1} << (3 * depth)) < tree.leaf_count()) ++depth;
  SparseOctree control = faded_tree(run.spec.scene, depth);
  TrainConfig fixed = cfg;
  fixed.interval = cfg.epochs + 1;
  const TrainHistory hc = train(control, run.train, run.views.test, fixed);
  INFO("calibrated " << tree.leaf_count() << " leaves, control " << control.leaf_count());
  CHECK(h.epochs.back().psnr >= hc.epochs.back().psnr);
}
