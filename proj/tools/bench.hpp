#pragma once

// Benchmark sweeps shaped like the operator and batch result tables:
// operator sweeps over #individuals, #concepts and #assertions (both
// regimes), and a batch sweep over hypothesis counts and devices.
//
// CSV columns, in order:
//   suite,workload,size,regime,column,time_us,speedup,assignment,status
// `time_us` is an integer number of microseconds (average of `runs`
// samples). `speedup` is baseline time / column time within the same
// (suite, workload, size, regime) group.

#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dleval/device.hpp"
#include "dleval/dl_ops.hpp"
#include "dleval/hypothesis.hpp"
#include "dleval/synth.hpp"

namespace dleval::bench {

struct BenchRow {
  std::string suite;
  std::string workload;
  std::uint64_t size = 0;
  std::string regime;
  std::string column;
  double time_us = 0.0;
  double speedup = 0.0;
  std::string assignment{};
  std::string status{"ok"};
};

inline constexpr const char* kCsvHeader =
    "suite,workload,size,regime,column,time_us,speedup,assignment,status";

struct BenchReport {
  std::vector<BenchRow> rows;

  // Fills `speedup` for every row from the "baseline" row of its group.
  void compute_speedups(const std::string& baseline_column = "baseline") {
    using Key = std::tuple<std::string, std::string, std::uint64_t, std::string>;
    std::map<Key, double> base;
    for (const BenchRow& r : rows) {
      if (r.column == baseline_column && r.status == "ok") {
        base[{r.suite, r.workload, r.size, r.regime}] = r.time_us;
      }
    }
    for (BenchRow& r : rows) {
      auto it = base.find({r.suite, r.workload, r.size, r.regime});
      r.speedup = (it != base.end() && r.status == "ok" && r.time_us > 0.0)
                      ? it->second / r.time_us
                      : 0.0;
    }
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << kCsvHeader << '\n';
    for (const BenchRow& r : rows) {
      out << r.suite << ',' << r.workload << ',' << r.size << ',' << r.regime << ',' << r.column
          << ',' << static_cast<std::uint64_t>(r.time_us + 0.5) << ',';
      out.setf(std::ios::fixed);
      out.precision(2);
      out << r.speedup << ',' << r.assignment << ',' << r.status << '\n';
    }
    return out.str();
  }
};

struct SweepOptions {
  std::size_t max_individuals = 1'000'000;
  std::size_t max_assertions = 1'000'000;
  std::size_t concept_sweep_individuals = 1'000'000;
  std::size_t max_batch = 10'000;
  std::size_t batch_individuals = 100'000;
  unsigned runs = 5;
  unsigned workers = 0;
  double min_sample_us = 200.0;
  std::uint64_t seed = 1;
  DeviceConfig devices;
};

// Average over `runs` samples; each sample repeats fn until it has taken at
// least min_sample_us and reports the per-call time.
inline double measure_us(const std::function<void()>& fn, unsigned runs, double min_sample_us) {
  using clock = std::chrono::steady_clock;
  double total = 0.0;
  runs = std::max(runs, 1u);
  for (unsigned r = 0; r < runs; ++r) {
    std::size_t reps = 0;
    const auto start = clock::now();
    double elapsed = 0.0;
    do {
      fn();
      ++reps;
      elapsed = std::chrono::duration<double, std::micro>(clock::now() - start).count();
    } while (elapsed < min_sample_us);
    total += elapsed / static_cast<double>(reps);
  }
  return total / runs;
}

inline std::size_t available_memory_bytes() {
  const long pages = sysconf(_SC_AVPHYS_PAGES);
  const long page = sysconf(_SC_PAGE_SIZE);
  if (pages <= 0 || page <= 0) return SIZE_MAX;
  return static_cast<std::size_t>(pages) * static_cast<std::size_t>(page);
}

// Rough footprint of a generated KB while it is being built.
inline std::size_t estimated_dataset_bytes(std::size_t individuals, std::size_t concepts,
                                           std::size_t assertions) {
  return individuals * (concepts * 5 + 256) + assertions * 96;
}

inline std::vector<std::size_t> decades(std::size_t from, std::size_t to) {
  std::vector<std::size_t> v;
  for (std::size_t x = from; x <= to; x *= 10) v.push_back(x);
  return v;
}

namespace detail {

inline const char* column_name(ExecutionStrategy s) {
  switch (s) {
    case ExecutionStrategy::SequentialScalar: return "baseline";
    case ExecutionStrategy::ParallelScalar: return "scalar";
    case ExecutionStrategy::ParallelVector: return "vector";
    case ExecutionStrategy::EmulatedDeviceParallel: return "emulated";
  }
  return "?";
}

inline void skipped_rows(BenchReport& report, const std::string& suite, const std::string& workload,
                         std::size_t size, const std::string& regime,
                         std::span<const ExecutionStrategy> strategies, const char* status) {
  for (ExecutionStrategy s : strategies) {
    BenchRow row{suite, workload, size, regime, column_name(s)};
    row.status = status;
    report.rows.push_back(row);
  }
}

inline void combine_sweep(BenchReport& report, bool conj, const std::string& workload,
                          std::size_t individuals, std::size_t concepts, std::size_t size,
                          const SweepOptions& opt) {
  static constexpr ExecutionStrategy strategies[] = {
      ExecutionStrategy::SequentialScalar, ExecutionStrategy::ParallelScalar,
      ExecutionStrategy::ParallelVector, ExecutionStrategy::EmulatedDeviceParallel};
  const std::string suite = conj ? "conjunction" : "disjunction";
  if (estimated_dataset_bytes(individuals, concepts, 0) > available_memory_bytes()) {
    skipped_rows(report, suite, workload, size, "", strategies, "skipped:memory");
    return;
  }
  try {
    DatasetSpec spec;
    spec.num_individuals = individuals;
    spec.num_concepts = concepts;
    spec.seed = opt.seed;
    const KnowledgeBase kb = build_dataset(spec);
    std::vector<RowView> rows;
    std::vector<std::uint8_t> neg(concepts, 0);
    for (std::uint32_t c = 0; c < concepts; ++c) rows.push_back(kb.concepts().row(ConceptId{c}));
    MembershipRow out(individuals);
    for (ExecutionStrategy s : strategies) {
      const Execution exec(s, opt.workers);
      const double t = measure_us(
          [&] {
            if (conj) {
              conjunction_into(out, kb, rows, neg, exec);
            } else {
              disjunction_into(out, kb, rows, neg, exec);
            }
          },
          opt.runs, opt.min_sample_us);
      report.rows.push_back({suite, workload, size, "", column_name(s), t});
    }
  } catch (const std::bad_alloc&) {
    skipped_rows(report, suite, workload, size, "", strategies, "skipped:memory");
  }
}

}  // namespace detail

inline void conjunction_sweeps(BenchReport& report, bool conj, const SweepOptions& opt) {
  for (std::size_t n : decades(10, opt.max_individuals)) {
    detail::combine_sweep(report, conj, "5-concepts-by-individuals", n, 5, n, opt);
  }
  for (std::size_t c : {1, 2, 4, 8, 16, 32}) {
    detail::combine_sweep(report, conj, "concepts-at-" + std::to_string(opt.concept_sweep_individuals),
                          opt.concept_sweep_individuals, c, c, opt);
  }
}

inline void restriction_sweeps(BenchReport& report, const SweepOptions& opt) {
  static constexpr ExecutionStrategy strategies[] = {ExecutionStrategy::SequentialScalar,
                                                     ExecutionStrategy::ParallelScalar,
                                                     ExecutionStrategy::EmulatedDeviceParallel};
  using Op = std::function<void(const KnowledgeBase&, RowSpan, std::span<std::uint32_t>,
                                const Execution&)>;
  const RowView* filler = nullptr;
  const std::vector<std::pair<std::string, Op>> ops = {
      {"exists", [&](const KnowledgeBase& kb, RowSpan out, auto, const Execution& e) {
         exists_role_into(out, kb, RoleId{0}, *filler, false, e);
       }},
      {"forall", [&](const KnowledgeBase& kb, RowSpan out, auto, const Execution& e) {
         forall_role_into(out, kb, RoleId{0}, *filler, false, e);
       }},
      {"min-cardinality", [&](const KnowledgeBase& kb, RowSpan out, auto ctr, const Execution& e) {
         cardinality_role_into(out, ctr, kb, RoleId{0}, *filler, CardinalityKind::Min, 1, false, e);
       }},
      {"max-cardinality", [&](const KnowledgeBase& kb, RowSpan out, auto ctr, const Execution& e) {
         cardinality_role_into(out, ctr, kb, RoleId{0}, *filler, CardinalityKind::Max, 1, false, e);
       }},
      {"numeric", [](const KnowledgeBase& kb, RowSpan out, auto, const Execution& e) {
         exists_numeric_into(out, kb, NumericRoleId{0}, NumericComparator::Min, 18.0f, e);
       }},
      {"string-equal", [](const KnowledgeBase& kb, RowSpan out, auto, const Execution& e) {
         string_equal_into(out, kb, StringRoleId{0}, "synthetic value", e);
       }},
      {"string-contain", [](const KnowledgeBase& kb, RowSpan out, auto, const Execution& e) {
         string_contain_into(out, kb, StringRoleId{0}, "value", e);
       }},
  };

  for (Regime regime : {Regime::SingleSubject, Regime::UniqueSubject}) {
    const std::string regime_name(to_string(regime));
    for (std::size_t m : decades(10, opt.max_assertions)) {
      DatasetSpec spec;
      spec.regime = regime;
      spec.num_assertions = m;
      spec.num_concepts = 1;
      spec.seed = opt.seed;
      const std::size_t n = dataset_individuals(spec);
      if (estimated_dataset_bytes(n, 1, m) > available_memory_bytes()) {
        for (const auto& [name, op] : ops) {
          detail::skipped_rows(report, name, "by-assertions", m, regime_name, strategies,
                               "skipped:memory");
        }
        continue;
      }
      try {
        const KnowledgeBase kb = build_dataset(spec);
        const RowView concept_row = kb.concepts().row(ConceptId{0});
        filler = &concept_row;
        MembershipRow out(n);
        std::vector<std::uint32_t> counters(n);
        for (const auto& [name, op] : ops) {
          for (ExecutionStrategy s : strategies) {
            const Execution exec(s, opt.workers);
            const double t = measure_us([&] { op(kb, out, counters, exec); }, opt.runs,
                                        opt.min_sample_us);
            report.rows.push_back({name, "by-assertions", m, regime_name,
                                   detail::column_name(s), t});
          }
        }
        filler = nullptr;
      } catch (const std::bad_alloc&) {
        filler = nullptr;
        for (const auto& [name, op] : ops) {
          detail::skipped_rows(report, name, "by-assertions", m, regime_name, strategies,
                               "skipped:memory");
        }
      }
    }
  }
}

inline std::string join_counts(const std::vector<std::size_t>& counts) {
  std::string s;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (k) s += '/';
    s += std::to_string(counts[k]);
  }
  return s;
}

// Batch sweep: every device alone ("device-<id>"), then all devices together
// ("all-devices", with the per-device assignment). Device 0 alone is the
// baseline column of each group. Returns the probed ratios.
inline std::vector<double> batch_sweep(BenchReport& report, const SweepOptions& opt) {
  DatasetSpec spec;
  spec.num_individuals = opt.batch_individuals;
  spec.num_concepts = 8;
  spec.seed = opt.seed;
  auto kb = std::make_shared<const KnowledgeBase>(build_dataset(spec));
  const Scheduler scheduler = Scheduler::probe_devices(detect_devices(opt.devices, kb),
                                                       scheduler_options(opt.devices));

  for (std::size_t size : decades(1, opt.max_batch)) {
    const auto texts = gen_hypothesis_batch(size, HypothesisTemplate::Conj5, *kb, opt.seed);
    const auto planned = plan_batch(texts, *kb);
    const std::string workload = "conj5-batch";
    for (const auto& d : scheduler.devices()) {
      const double t = measure_us([&] { d->evaluate_batch(planned); }, opt.runs, 0.0);
      BenchRow row{"batch", workload, size, "", "device-" + std::to_string(d->id()), t};
      row.assignment = d->kind();
      report.rows.push_back(row);
    }
    const double t = measure_us([&] { scheduler.run(planned); }, opt.runs, 0.0);
    BenchRow row{"batch", workload, size, "", "all-devices", t};
    row.assignment = join_counts(scheduler.assign(size).counts());
    report.rows.push_back(row);
  }
  report.compute_speedups("device-" + std::to_string(scheduler.devices().front()->id()));
  return scheduler.ratios();
}

}  // namespace dleval::bench
