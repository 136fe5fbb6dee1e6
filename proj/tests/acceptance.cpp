// Acceptance checks, one per criterion. Prints one PASS/FAIL/SKIP line each.
//   dleval_acceptance [--criterion N]
// Exit status: 0 all selected passed, 1 any failed, 77 skipped (single criterion).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dleval/dleval.hpp"
#include "oracle.hpp"

using namespace dleval;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class F>
double median_us(int runs, F&& f) {
  std::vector<double> t;
  for (int r = 0; r < runs; ++r) {
    const auto start = Clock::now();
    f();
    t.push_back(std::chrono::duration<double, std::micro>(Clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict pass_if(bool ok, std::string detail) {
  return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)};
}

// ---------------------------------------------------------------------------

Verdict oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240611);
  std::vector<bool> kind_seen(oracle::kKindCount, false);
  bool inverse_seen = false;
  std::size_t mismatches = 0;
  std::string first;
  const oracle::Limits lim{200, 8, 4, 500};

  std::function<void(const oracle::Expr&)> note = [&](const oracle::Expr& e) {
    kind_seen[static_cast<int>(e.kind)] = true;
    inverse_seen = inverse_seen || e.inverse;
    for (auto& [neg, op] : e.operands) note(*op);
    if (e.filler) note(*e.filler);
  };

  for (int pair = 0; pair < 1000; ++pair) {
    const oracle::World w = oracle::random_world(rng, lim);
    // Every kind leads the root in turn; subtrees are free.
    oracle::Kind root = static_cast<oracle::Kind>(pair % oracle::kKindCount);
    const auto expr = oracle::random_expr(rng, w, 3, &root);
    note(*expr);
    const std::string text = oracle::render(*expr);
    const auto [pos, neg] = oracle::coverage(w, oracle::eval(w, *expr));
    const KnowledgeBase kb = load_kb(oracle::to_document(w));
    for (ExecutionStrategy s : kAllStrategies) {
      const CoverageResult got = evaluate(text, kb, Execution(s, 4));
      if (got.pos != pos || got.neg != neg) {
        if (mismatches++ == 0) {
          first = fmt(" first: pair %d %s %s", pair, std::string(to_string(s)).c_str(), text.c_str());
        }
      }
    }
  }
  const bool kinds = std::all_of(kind_seen.begin(), kind_seen.end(), [](bool b) { return b; });
  const double secs = seconds_since(start);
  return pass_if(mismatches == 0 && kinds && inverse_seen && secs < 120.0,
                 fmt("1000 pairs x 4 strategies, %zu mismatches, all kinds %s, inverse %s, %.1f s "
                     "(limit 120 s)",
                     mismatches, kinds ? "yes" : "no", inverse_seen ? "yes" : "no", secs) +
                     first);
}

Verdict race_determinism() {
  const auto start = Clock::now();
  DatasetSpec spec;
  spec.regime = Regime::SingleSubject;
  spec.num_assertions = 1000000;
  spec.num_concepts = 1;
  const KnowledgeBase kb = build_dataset(spec);
  const RowView filler = kb.concepts().row(ConceptId{0});
  const RoleId r{0};
  const NumericRoleId n{0};
  const StringRoleId s{0};

  using Op = std::function<MembershipRow(const Execution&)>;
  const std::vector<std::pair<std::string, Op>> ops = {
      {"exists", [&](const Execution& e) { return exists_role(kb, r, filler, false, e); }},
      {"exists-inv", [&](const Execution& e) { return exists_role(kb, r, filler, true, e); }},
      {"forall", [&](const Execution& e) { return forall_role(kb, r, filler, false, e); }},
      {"min", [&](const Execution& e) {
         return cardinality_role(kb, r, filler, CardinalityKind::Min, 3, false, e);
       }},
      {"exactly", [&](const Execution& e) {
         return cardinality_role(kb, r, filler, CardinalityKind::Exactly, 3, false, e);
       }},
      {"max", [&](const Execution& e) {
         return cardinality_role(kb, r, filler, CardinalityKind::Max, 600000, false, e);
       }},
      {"numeric", [&](const Execution& e) {
         return exists_numeric(kb, n, NumericComparator::Min, 10.0f, e);
       }},
      {"string-equal", [&](const Execution& e) { return string_equal(kb, s, spec.string_value, e); }},
      {"string-contain", [&](const Execution& e) { return string_contain(kb, s, "value", e); }},
  };

  std::size_t runs = 0;
  std::string broken;
  for (const auto& [name, op] : ops) {
    const MembershipRow reference = op(ExecutionStrategy::SequentialScalar);
    for (ExecutionStrategy strat :
         {ExecutionStrategy::ParallelScalar, ExecutionStrategy::EmulatedDeviceParallel}) {
      const Execution e(strat, 8);
      for (int rep = 0; rep < 50; ++rep, ++runs) {
        if (op(e) != reference) {
          broken += " " + name + "/" + std::string(to_string(strat));
          break;
        }
      }
    }
  }
  const double secs = seconds_since(start);
  return pass_if(broken.empty() && secs < 300.0,
                 fmt("%zu runs over 10^6 single-subject assertions, %.1f s (limit 300 s)", runs,
                     secs) +
                     (broken.empty() ? "" : ", differing:" + broken));
}

Verdict vector_boundaries() {
  std::mt19937_64 rng(64);
  std::size_t checks = 0;
  std::size_t bad = 0;
  for (std::size_t n = 0; n <= 64; ++n) {
    KnowledgeBaseBuilder b;
    for (int c = 0; c < 32; ++c) b.add_concept("C" + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) b.add_individual("i" + std::to_string(i));
    for (std::uint32_t c = 0; c < 32; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        if (rng() & 1) b.assert_concept(ConceptId{c}, i);
      }
    }
    const KnowledgeBase kb = std::move(b).build();
    for (std::size_t k : {0, 1, 2, 5, 32}) {
      std::vector<RowView> rows;
      std::vector<std::uint8_t> neg;
      for (std::size_t j = 0; j < k; ++j) {
        rows.push_back(kb.concepts().row(ConceptId{static_cast<std::uint32_t>(j)}));
        neg.push_back(rng() & 1);
      }
      const MembershipRow conj = conjunction(kb, rows, neg, ExecutionStrategy::SequentialScalar);
      const MembershipRow disj = disjunction(kb, rows, neg, ExecutionStrategy::SequentialScalar);
      for (ExecutionStrategy s : kAllStrategies) {
        const Execution e(s, 3);
        bad += conjunction(kb, rows, neg, e) != conj;
        bad += disjunction(kb, rows, neg, e) != disj;
        checks += 2;
      }
    }
  }
  return pass_if(bad == 0, fmt("%zu comparisons for n in 0..64, k in {0,1,2,5,32}, %zu differ",
                               checks, bad));
}

Verdict scheduling_arithmetic() {
  const double times[] = {100.0, 200.0, 400.0};
  const std::vector<double> ratios = compute_ratios(times);
  const bool exact = ratios[0] == 4.0 / 7.0 && ratios[1] == 2.0 / 7.0 && ratios[2] == 1.0 / 7.0;

  const auto counts = partition(1000, ratios).counts();
  std::size_t sum = 0;
  bool within = true;
  for (std::size_t d = 0; d < counts.size(); ++d) {
    sum += counts[d];
    within = within && std::abs(static_cast<double>(counts[d]) - ratios[d] * 1000.0) <= 1.0;
  }

  bool small = true;
  for (std::size_t b = 1; b <= kDefaultSmallBatchThreshold; ++b) {
    const auto c = partition(b, ratios).counts();
    small = small && c[0] == b && c[1] == 0 && c[2] == 0;
  }
  const auto eleven = partition(kDefaultSmallBatchThreshold + 1, ratios).counts();
  const bool splits_above = eleven[1] + eleven[2] > 0;

  std::ostringstream c;
  for (std::size_t d = 0; d < counts.size(); ++d) c << (d ? "/" : "") << counts[d];
  return pass_if(exact && sum == 1000 && within && small && splits_above,
                 fmt("ratios %.6f/%.6f/%.6f exact=%s, partition(1000)=%s sum %zu, batches 1..10 "
                     "on fastest=%s",
                     ratios[0], ratios[1], ratios[2], exact ? "yes" : "no", c.str().c_str(), sum,
                     small ? "yes" : "no"));
}

Verdict speedup_direction() {
  const unsigned threads = std::thread::hardware_concurrency();
  DatasetSpec spec;
  spec.num_individuals = 1000000;
  spec.num_concepts = 5;
  const KnowledgeBase kb = build_dataset(spec);
  std::vector<RowView> rows;
  for (std::uint32_t c = 0; c < 5; ++c) rows.push_back(kb.concepts().row(ConceptId{c}));
  const std::vector<std::uint8_t> neg(5, 0);
  MembershipRow out(kb.num_individuals());

  const auto start = Clock::now();
  auto time = [&](ExecutionStrategy s) {
    return median_us(5, [&] { conjunction_into(out, kb, rows, neg, s); });
  };
  const double seq = time(ExecutionStrategy::SequentialScalar);
  const double scalar = time(ExecutionStrategy::ParallelScalar);
  const double vector = time(ExecutionStrategy::ParallelVector);
  const double secs = seconds_since(start);
  const std::string detail =
      fmt("%u hardware threads; sequential %.0f us, scalar %.0f us (%.2fx), vector %.0f us "
          "(%.2fx over scalar), %.1f s",
          threads, seq, scalar, seq / scalar, vector, scalar / vector, secs);
  if (threads < 8) return {Outcome::Skip, detail + "; needs at least 8 hardware threads"};
  return pass_if(seq / scalar >= 3.0 && scalar / vector >= 1.5 && secs < 60.0,
                 detail + " (need 3x and 1.5x)");
}

Verdict aggregation_direction() {
  DatasetSpec spec;
  spec.num_individuals = 1000000;
  const auto kb = std::make_shared<const KnowledgeBase>(build_dataset(spec));
  const auto texts = gen_hypothesis_batch(1000, HypothesisTemplate::Conj5, *kb, 11);
  const auto planned = plan_batch(texts, *kb);

  auto scheduler_for = [&](bool vector, unsigned emulated) {
    DeviceConfig cfg;
    cfg.vector_pool = vector;
    cfg.emulated_pools = emulated;
    return Scheduler::probe_devices(detect_devices(cfg, kb));
  };

  const Scheduler multi = scheduler_for(true, 2);
  const Scheduler vector_only = scheduler_for(true, 0);
  const Scheduler emulated_only = scheduler_for(false, 1);

  std::vector<CoverageResult> multi_out;
  std::vector<CoverageResult> vector_out;
  std::vector<CoverageResult> emulated_out;
  const double t_multi = median_us(5, [&] { multi_out = multi.run(planned); });
  const double t_vector = median_us(5, [&] { vector_out = vector_only.run(planned); });
  const double t_emulated = median_us(5, [&] { emulated_out = emulated_only.run(planned); });
  const double best = std::min(t_vector, t_emulated);

  const bool identical = multi_out == vector_out && multi_out == emulated_out;
  std::ostringstream assignment;
  const auto counts = multi.assign(planned.size()).counts();
  for (std::size_t d = 0; d < counts.size(); ++d) assignment << (d ? "/" : "") << counts[d];
  return pass_if(t_multi <= best * 1.1 && identical,
                 fmt("%u hardware threads; multi-device %.0f us (assignment %s), vector pool "
                     "%.0f us, emulated %.0f us, ratio to best single %.3f (limit 1.100), "
                     "output identical=%s",
                     std::thread::hardware_concurrency(), t_multi, assignment.str().c_str(),
                     t_vector, t_emulated, t_multi / best, identical ? "yes" : "no"));
}

Verdict regime_asymmetry() {
  auto advantage = [](Regime regime, double& seq_us, double& emu_us) {
    DatasetSpec spec;
    spec.regime = regime;
    spec.num_assertions = 1000000;
    spec.num_concepts = 1;
    const KnowledgeBase kb = build_dataset(spec);
    const RowView filler = kb.concepts().row(ConceptId{0});
    MembershipRow out(kb.num_individuals());
    auto time = [&](ExecutionStrategy s) {
      return median_us(5, [&] { exists_role_into(out, kb, RoleId{0}, filler, false, s); });
    };
    seq_us = time(ExecutionStrategy::SequentialScalar);
    emu_us = time(ExecutionStrategy::EmulatedDeviceParallel);
    return seq_us / emu_us;
  };
  double single_seq = 0, single_emu = 0, unique_seq = 0, unique_emu = 0;
  const double single = advantage(Regime::SingleSubject, single_seq, single_emu);
  const double unique = advantage(Regime::UniqueSubject, unique_seq, unique_emu);
  return pass_if(unique > single,
                 fmt("exists advantage unique-subject %.3fx (%.0f/%.0f us) vs single-subject "
                     "%.3fx (%.0f/%.0f us)",
                     unique, unique_seq, unique_emu, single, single_seq, single_emu));
}

Verdict equal_short_circuit() {
  DatasetSpec spec;
  spec.regime = Regime::UniqueSubject;
  spec.num_assertions = 10000;
  const KnowledgeBase kb = build_dataset(spec);
  const StringRoleId s{0};
  std::size_t iterations = 0;
  bool all_zero = true;
  for (ExecutionStrategy strat : {ExecutionStrategy::SequentialScalar, ExecutionStrategy::ParallelScalar,
                                  ExecutionStrategy::EmulatedDeviceParallel}) {
    OpStats stats;
    Execution e(strat, 4);
    e.stats = &stats;
    const MembershipRow row = string_equal(kb, s, "never interned", e);
    iterations += stats.tested + stats.skipped;
    all_zero = all_zero && std::all_of(row.begin(), row.end(), [](std::uint8_t v) { return v == 0; });
  }
  // Control: a known value does scan.
  OpStats known;
  Execution e(ExecutionStrategy::SequentialScalar);
  e.stats = &known;
  string_equal(kb, s, spec.string_value, e);
  return pass_if(iterations == 0 && all_zero && known.tested > 0,
                 fmt("unknown value: %zu scan iterations, all-0 row=%s; known value scanned %llu",
                     iterations, all_zero ? "yes" : "no",
                     static_cast<unsigned long long>(known.tested.load())));
}

Verdict cardinality_semantics() {
  // MIN: cVal>=rVal, EXACTLY: cVal==rVal, MAX: cVal>0 && cVal<=rVal.
  std::size_t bad = 0;
  for (std::uint32_t c = 0; c <= 10; ++c) {
    for (std::uint32_t r = 0; r <= 10; ++r) {
      bad += cardinality_holds(CardinalityKind::Min, c, r) != (c >= r);
      bad += cardinality_holds(CardinalityKind::Exactly, c, r) != (c == r);
      bad += cardinality_holds(CardinalityKind::Max, c, r) != (c > 0 && c <= r);
    }
  }
  // Same table through the operator: individual c has exactly c filler successors.
  KnowledgeBaseBuilder b;
  b.add_concept("F");
  b.add_role("r");
  const std::size_t owners = 11;
  for (std::size_t i = 0; i < owners + 10; ++i) b.add_individual("i" + std::to_string(i));
  for (std::size_t i = owners; i < owners + 10; ++i) b.assert_concept(ConceptId{0}, i);
  for (std::size_t c = 0; c < owners; ++c) {
    for (std::size_t k = 0; k < c; ++k) b.assert_role(RoleId{0}, c, owners + k);
  }
  const KnowledgeBase kb = std::move(b).build();
  const RowView filler = kb.concepts().row(ConceptId{0});
  for (ExecutionStrategy s : {ExecutionStrategy::SequentialScalar, ExecutionStrategy::ParallelScalar,
                              ExecutionStrategy::EmulatedDeviceParallel}) {
    for (CardinalityKind k : {CardinalityKind::Min, CardinalityKind::Exactly, CardinalityKind::Max}) {
      for (std::uint32_t r = 0; r <= 10; ++r) {
        const MembershipRow row = cardinality_role(kb, RoleId{0}, filler, k, r, false, Execution(s, 3));
        for (std::uint32_t c = 0; c < owners; ++c) {
          bad += (row[c] != 0) != cardinality_holds(k, c, r);
        }
      }
    }
  }
  return pass_if(bad == 0, fmt("363 predicate cells and 1089 operator cells, %zu wrong", bad));
}

const std::vector<Verdict (*)()> kCriteria = {
    oracle_equivalence,    race_determinism,      vector_boundaries,
    scheduling_arithmetic, speedup_direction,     aggregation_direction,
    regime_asymmetry,      equal_short_circuit,   cardinality_semantics,
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dleval acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion")
      ->check(CLI::Range(1, static_cast<int>(kCriteria.size())));
  CLI11_PARSE(app, argc, argv);

  bool failed = false;
  bool skipped = false;
  for (std::size_t k = 0; k < kCriteria.size(); ++k) {
    if (only != 0 && static_cast<int>(k) + 1 != only) continue;
    Verdict v{Outcome::Fail, ""};
    try {
      v = kCriteria[k]();
    } catch (const std::exception& e) {
      v.detail = std::string("exception: ") + e.what();
    }
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    std::printf("%s criterion %zu: %s\n", tag, k + 1, v.detail.c_str());
    std::fflush(stdout);
    failed = failed || v.outcome == Outcome::Fail;
    skipped = skipped || v.outcome == Outcome::Skip;
  }
  if (failed) return 1;
  return only != 0 && skipped ? 77 : 0;
}
