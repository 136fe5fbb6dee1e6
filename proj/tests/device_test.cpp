#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "dleval/device.hpp"
#include "dleval/synth.hpp"

using namespace dleval;

namespace {

std::shared_ptr<const KnowledgeBase> synthetic_kb(std::size_t individuals, std::size_t concepts = 8,
                                                  std::size_t assertions = 0) {
  DatasetSpec spec;
  spec.regime = Regime::UniqueSubject;
  spec.num_individuals = individuals;
  spec.num_concepts = concepts;
  spec.num_assertions = assertions;
  return std::make_shared<const KnowledgeBase>(build_dataset(spec));
}

class FailingDevice final : public Device {
 public:
  FailingDevice(std::size_t id, std::shared_ptr<const KnowledgeBase> kb, bool fail_probe)
      : Device(id, std::move(kb)), fail_probe_(fail_probe) {}
  std::string kind() const override { return "failing"; }
  void evaluate_batch(std::span<const PlannedHypothesis> hyps,
                      std::span<CoverageResult>) const override {
    if (fail_probe_ || hyps.size() > 1) throw Error("simulated device fault");
  }

 private:
  bool fail_probe_;
};

std::vector<std::unique_ptr<Device>> pools(const std::shared_ptr<const KnowledgeBase>& kb,
                                           std::initializer_list<BackendKind> kinds) {
  std::vector<std::unique_ptr<Device>> v;
  for (BackendKind k : kinds) v.push_back(std::make_unique<PoolDevice>(v.size(), kb, k, 2));
  return v;
}

}  // namespace

TEST(DeviceConfig, ParsesKeys) {
  const DeviceConfig cfg = parse_device_config(
      "; devices\nvector_pool = off\nemulated_pools = 2\nsimulated_slowdowns = 1, 2,4\n"
      "# comment\nsmall_batch_threshold = 5\nchunk_batches = on\nchunk_size = 250\n");
  EXPECT_FALSE(cfg.vector_pool);
  EXPECT_EQ(cfg.emulated_pools, 2u);
  EXPECT_EQ(cfg.simulated_slowdowns, (std::vector<unsigned>{1, 2, 4}));
  EXPECT_EQ(cfg.small_batch_threshold, 5u);
  EXPECT_TRUE(cfg.chunk_batches);
  EXPECT_EQ(cfg.chunk_size, 250u);
  EXPECT_THROW(parse_device_config("nonsense = 1\n"), ParseError);
  EXPECT_THROW(parse_device_config("vector_pool = maybe\n"), ParseError);
  EXPECT_THROW(parse_device_config("simulated_slowdowns = 0\n"), ParseError);
  EXPECT_THROW(parse_device_config("no equals sign\n"), ParseError);
}

TEST(DetectDevices, Counts) {
  auto kb = synthetic_kb(100);
  EXPECT_EQ(detect_devices(DeviceConfig{}, kb).size(), 1u);
  DeviceConfig cfg;
  cfg.emulated_pools = 2;
  auto three = detect_devices(cfg, kb);
  ASSERT_EQ(three.size(), 3u);
  EXPECT_EQ(three[0]->kind(), "vector-pool");
  EXPECT_EQ(three[1]->kind(), "emulated");
  DeviceConfig slow;
  slow.vector_pool = false;
  slow.simulated_slowdowns = {1, 2, 4};
  auto sims = detect_devices(slow, kb);
  ASSERT_EQ(sims.size(), 3u);
  EXPECT_EQ(dynamic_cast<const PoolDevice&>(*sims[2]).slowdown(), 4u);
  DeviceConfig none;
  none.vector_pool = false;
  EXPECT_THROW(detect_devices(none, kb), DeviceError);
}

TEST(ComputeRatios, Examples) {
  const double times[] = {100, 200, 400};
  const auto r = compute_ratios(times);
  EXPECT_EQ(r[0], 4.0 / 7.0);
  EXPECT_EQ(r[1], 2.0 / 7.0);
  EXPECT_EQ(r[2], 1.0 / 7.0);
  const double one[] = {37.5};
  EXPECT_EQ(compute_ratios(one)[0], 1.0);
  const double equal[] = {5, 5, 5, 5};
  for (double v : compute_ratios(equal)) EXPECT_DOUBLE_EQ(v, 0.25);
  const double bad[] = {1, 0};
  EXPECT_THROW(compute_ratios(bad), InvalidArgument);
  const double negative[] = {-1};
  EXPECT_THROW(compute_ratios(negative), InvalidArgument);
}

TEST(ComputeRatios, NormalizedAndPositive) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> t(1 + rng() % 6);
    for (double& v : t) v = 1e-3 + std::uniform_real_distribution<double>(0, 1e6)(rng);
    const auto r = compute_ratios(t);
    EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-9);
    for (double v : r) EXPECT_GT(v, 0.0);
  }
}

TEST(Partition, Examples) {
  const double times[] = {100, 200, 400};
  const auto r = compute_ratios(times);
  EXPECT_EQ(partition(1000, r).counts(), (std::vector<std::size_t>{572, 286, 142}));
  EXPECT_EQ(partition(10, r).counts(), (std::vector<std::size_t>{10, 0, 0}));
  EXPECT_EQ(partition(0, r).counts(), (std::vector<std::size_t>{0, 0, 0}));
  const double slow_first[] = {400, 100, 200};
  EXPECT_EQ(partition(7, compute_ratios(slow_first)).counts(),
            (std::vector<std::size_t>{0, 7, 0}));
}

TEST(Partition, ApportionmentExactness) {
  std::vector<std::vector<double>> ratio_sets;
  std::vector<double> base = {100, 200, 400, 150};
  std::sort(base.begin(), base.end());
  do {
    ratio_sets.push_back(compute_ratios(base));
  } while (std::next_permutation(base.begin(), base.end()));
  ratio_sets.push_back({1.0});
  ratio_sets.push_back(compute_ratios(std::vector<double>{1, 1, 1}));

  for (const auto& r : ratio_sets) {
    for (std::size_t n = 0; n <= 10000; ++n) {
      const BatchAssignment a = partition(n, r);
      std::size_t next = 0;
      std::size_t busy = 0;
      for (std::size_t d = 0; d < r.size(); ++d) {
        ASSERT_EQ(a.ranges[d].start, next);
        next += a.ranges[d].count;
        busy += a.ranges[d].count > 0;
        if (n > kDefaultSmallBatchThreshold) {
          ASSERT_LE(std::abs(static_cast<double>(a.ranges[d].count) - r[d] * n), 1.0);
        }
      }
      ASSERT_EQ(next, n);
      if (n > 0 && n <= kDefaultSmallBatchThreshold) {
        ASSERT_EQ(busy, 1u);
      }
    }
  }
}

TEST(Probe, SlowdownScalesProbeTime) {
  auto kb = synthetic_kb(200000, 5);
  const PoolDevice fast(0, kb, BackendKind::VectorPool, 1, 1);
  const PoolDevice slow(1, kb, BackendKind::VectorPool, 1, 4);
  // Best of a few probes on each side keeps scheduler noise out of the ratio.
  double tf = 1e30;
  double ts = 1e30;
  for (int k = 0; k < 5; ++k) {
    tf = std::min(tf, probe(fast));
    ts = std::min(ts, probe(slow));
  }
  EXPECT_NEAR(ts / tf, 4.0, 1.0);
}

TEST(Probe, GrowsWithIndividuals) {
  auto small = synthetic_kb(10000, 5);
  auto large = synthetic_kb(1000000, 5);
  const PoolDevice a(0, small, BackendKind::ScalarPool, 1);
  const PoolDevice b(0, large, BackendKind::ScalarPool, 1);
  EXPECT_GT(probe(b), probe(a));
}

TEST(Probe, UsesAvailableConcepts) {
  auto kb = synthetic_kb(10, 2);
  EXPECT_EQ(probe_hypothesis_text(*kb), "(AND C0 C1)");
  EXPECT_EQ(probe_hypothesis_text(*synthetic_kb(10, 9)), "(AND C0 C1 C2 C3 C4)");
  EXPECT_THROW(probe_hypothesis_text(*synthetic_kb(10, 0)), InvalidArgument);
}

TEST(Scheduler, DropsDevicesThatFailTheProbe) {
  auto kb = synthetic_kb(1000);
  auto devices = pools(kb, {BackendKind::VectorPool});
  devices.push_back(std::make_unique<FailingDevice>(1, kb, true));
  const Scheduler s = Scheduler::probe_devices(std::move(devices));
  EXPECT_EQ(s.devices().size(), 1u);
  ASSERT_EQ(s.failures().size(), 1u);
  EXPECT_EQ(s.failures()[0].device_id, 1u);

  std::vector<std::unique_ptr<Device>> only_bad;
  only_bad.push_back(std::make_unique<FailingDevice>(0, kb, true));
  EXPECT_THROW(Scheduler::probe_devices(std::move(only_bad)), DeviceError);
}

TEST(Scheduler, MidBatchFailureAbortsWithDiagnostic) {
  auto kb = synthetic_kb(1000);
  auto devices = pools(kb, {BackendKind::VectorPool});
  devices.push_back(std::make_unique<FailingDevice>(1, kb, false));
  const Scheduler s(std::move(devices), {1.0, 1.0});
  const auto texts = gen_hypothesis_batch(100, HypothesisTemplate::Conj5, *kb, 3);
  try {
    evaluate_batch(texts, *kb, s);
    FAIL() << "expected a device error";
  } catch (const DeviceError& e) {
    EXPECT_EQ(e.device_id(), 1u);
    EXPECT_NE(std::string(e.what()).find("simulated device fault"), std::string::npos);
  }
}

TEST(EvaluateBatch, ParseErrorNamesIndex) {
  auto kb = synthetic_kb(100);
  const Scheduler s(pools(kb, {BackendKind::VectorPool}), {1.0});
  std::vector<std::string> texts = {"C0", "(AND C1 C2)", "(AND C1 Missing)", "C3"};
  try {
    evaluate_batch(texts, *kb, s);
    FAIL() << "expected a batch error";
  } catch (const BatchError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(EvaluateBatch, ResultsIndependentOfDevices) {
  auto kb = synthetic_kb(3000, 8, 1000);
  const auto mixed = gen_hypothesis_batch(50, HypothesisTemplate::RandomMixed, *kb, 5);
  const auto identical = std::vector<std::string>(100, "(AND C0 (NOT C3) (SOME r C1))");

  const Scheduler one(pools(kb, {BackendKind::ScalarPool}), {1.0});
  std::vector<CoverageResult> reference;
  for (const auto& t : mixed) reference.push_back(evaluate(t, *kb, ExecutionStrategy::SequentialScalar));
  EXPECT_EQ(evaluate_batch(mixed, *kb, one), reference);

  const std::vector<std::vector<double>> probe_sets = {{1, 1, 1}, {100, 200, 400}, {400, 1, 30}};
  for (const auto& times : probe_sets) {
    SchedulerOptions chunked;
    chunked.chunk_batches = true;
    chunked.chunk_size = 7;
    for (const SchedulerOptions& opts : {SchedulerOptions{}, chunked}) {
      const Scheduler three(
          pools(kb, {BackendKind::EmulatedParallel, BackendKind::VectorPool, BackendKind::ScalarPool}),
          times, opts);
      EXPECT_EQ(evaluate_batch(mixed, *kb, three), reference);
      const auto same = evaluate_batch(identical, *kb, three);
      ASSERT_EQ(same.size(), 100u);
      for (const auto& r : same) EXPECT_EQ(r, evaluate(identical[0], *kb, ExecutionStrategy::SequentialScalar));
    }
  }

  const Scheduler fastest_last(pools(kb, {BackendKind::ScalarPool, BackendKind::VectorPool}), {5, 1});
  const std::vector<std::string> single = {mixed[0]};
  EXPECT_EQ(fastest_last.assign(1).counts(), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(evaluate_batch(single, *kb, fastest_last)[0], reference[0]);
}

TEST(EvaluateBatch, RejectsForeignKb) {
  auto kb = synthetic_kb(100);
  auto other = synthetic_kb(100);
  const Scheduler s(pools(kb, {BackendKind::VectorPool}), {1.0});
  const std::vector<std::string> texts = {"C0"};
  EXPECT_THROW(evaluate_batch(texts, *other, s), InvalidArgument);
}
