#include <gtest/gtest.h>

#include <set>

#include "bench.hpp"

using namespace dleval;
using namespace dleval::bench;

namespace {

SweepOptions tiny() {
  SweepOptions o;
  o.max_individuals = 100000;
  o.concept_sweep_individuals = 1000;
  o.max_assertions = 1000;
  o.max_batch = 100;
  o.batch_individuals = 2000;
  o.runs = 2;
  o.min_sample_us = 50;
  return o;
}

}  // namespace

TEST(BenchReport, CsvLayoutAndBaselineSpeedup) {
  BenchReport r;
  r.rows.push_back({"conjunction", "w", 10, "", "baseline", 100.0});
  r.rows.push_back({"conjunction", "w", 10, "", "scalar", 25.0});
  r.rows.push_back({"conjunction", "w", 20, "", "scalar", 10.0});
  r.compute_speedups();
  EXPECT_DOUBLE_EQ(r.rows[0].speedup, 1.0);
  EXPECT_DOUBLE_EQ(r.rows[1].speedup, 4.0);
  EXPECT_DOUBLE_EQ(r.rows[2].speedup, 0.0);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kCsvHeader);
  EXPECT_NE(csv.find("conjunction,w,10,,scalar,25,4.00,,ok"), std::string::npos);
}

TEST(BenchSweeps, ConjunctionRowsPerSize) {
  BenchReport r;
  conjunction_sweeps(r, true, tiny());
  r.compute_speedups();
  std::vector<double> baseline;
  for (const BenchRow& row : r.rows) {
    if (row.workload == "5-concepts-by-individuals" && row.column == "baseline") {
      baseline.push_back(row.time_us);
      EXPECT_DOUBLE_EQ(row.speedup, 1.0);
    }
  }
  // 10, 100, ..., 100000
  ASSERT_EQ(baseline.size(), 5u);
  EXPECT_LT(baseline.front(), baseline.back());
  std::size_t concept_rows = 0;
  for (const BenchRow& row : r.rows) concept_rows += row.workload.starts_with("concepts-at-");
  EXPECT_EQ(concept_rows, 6u * 4u);
}

TEST(BenchSweeps, RestrictionsCoverBothRegimes) {
  BenchReport r;
  restriction_sweeps(r, tiny());
  std::set<std::string> regimes;
  std::set<std::string> suites;
  for (const BenchRow& row : r.rows) {
    regimes.insert(row.regime);
    suites.insert(row.suite);
    EXPECT_EQ(row.status, "ok");
  }
  EXPECT_EQ(regimes, (std::set<std::string>{"single-subject", "unique-subject"}));
  EXPECT_EQ(suites.size(), 7u);
}

TEST(BenchSweeps, BatchAssignmentsMatchPartition) {
  SweepOptions o = tiny();
  o.devices.vector_pool = false;
  o.devices.simulated_slowdowns = {1, 2};
  BenchReport r;
  const std::vector<double> ratios = batch_sweep(r, o);
  ASSERT_EQ(ratios.size(), 2u);
  std::size_t checked = 0;
  for (const BenchRow& row : r.rows) {
    if (row.column != "all-devices") continue;
    ++checked;
    EXPECT_EQ(row.assignment, join_counts(partition(row.size, ratios).counts()));
  }
  EXPECT_EQ(checked, 3u);  // 1, 10, 100
}

TEST(BenchSweeps, SkipsRowsThatDoNotFit) {
  SweepOptions o = tiny();
  o.max_individuals = 10;
  o.concept_sweep_individuals = std::size_t{1} << 50;
  BenchReport r;
  conjunction_sweeps(r, false, o);
  std::size_t skipped = 0;
  for (const BenchRow& row : r.rows) skipped += row.status == "skipped:memory";
  EXPECT_EQ(skipped, 6u * 4u);
}
