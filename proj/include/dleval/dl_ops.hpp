#pragma once

// DL operators over membership rows.
//
// Every operator has one semantics and up to four execution strategies:
//   SequentialScalar        one thread, skip-ahead over already-decided subjects
//   ParallelScalar          fixed contiguous chunk of the input per worker
//   ParallelVector          16 byte lanes per step; conjunction/disjunction only
//   EmulatedDeviceParallel  one logical thread per assertion or individual, no
//                           skip-ahead, atomic counters (accelerator kernel shape)
//
// Parallel strategies may write the same output cell from several workers,
// but only ever with the same value, so the final row is deterministic.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "dleval/error.hpp"
#include "dleval/kb.hpp"
#include "dleval/parallel.hpp"

namespace dleval {

using MembershipRow = std::vector<std::uint8_t>;
using RowView = std::span<const std::uint8_t>;
using RowSpan = std::span<std::uint8_t>;

enum class ExecutionStrategy : std::uint8_t {
  SequentialScalar,
  ParallelScalar,
  ParallelVector,
  EmulatedDeviceParallel,
};

inline constexpr ExecutionStrategy kAllStrategies[] = {
    ExecutionStrategy::SequentialScalar,
    ExecutionStrategy::ParallelScalar,
    ExecutionStrategy::ParallelVector,
    ExecutionStrategy::EmulatedDeviceParallel,
};

inline std::string_view to_string(ExecutionStrategy s) noexcept {
  switch (s) {
    case ExecutionStrategy::SequentialScalar: return "sequential";
    case ExecutionStrategy::ParallelScalar: return "scalar";
    case ExecutionStrategy::ParallelVector: return "vector";
    case ExecutionStrategy::EmulatedDeviceParallel: return "emulated";
  }
  return "?";
}

inline std::optional<ExecutionStrategy> parse_strategy(std::string_view s) noexcept {
  for (ExecutionStrategy e : kAllStrategies) {
    if (to_string(e) == s) return e;
  }
  return std::nullopt;
}

enum class CardinalityKind : std::uint8_t { Min, Exactly, Max };
enum class NumericComparator : std::uint8_t { Min, Exact, Max };

// MAX also requires at least one match; subjects with a zero count fail it.
constexpr bool cardinality_holds(CardinalityKind kind, std::uint32_t count,
                                 std::uint32_t bound) noexcept {
  switch (kind) {
    case CardinalityKind::Min: return count >= bound;
    case CardinalityKind::Exactly: return count == bound;
    case CardinalityKind::Max: return count > 0 && count <= bound;
  }
  return false;
}

// NaN values compare false under every comparator.
constexpr bool numeric_holds(NumericComparator cmp, float value, float bound) noexcept {
  switch (cmp) {
    case NumericComparator::Min: return value >= bound;
    case NumericComparator::Exact: return value == bound;
    case NumericComparator::Max: return value <= bound;
  }
  return false;
}

// Assertion-scan counters. `tested` counts assertions whose match predicate
// was evaluated; `skipped` counts assertions jumped over by skip-ahead.
struct OpStats {
  std::atomic<std::uint64_t> tested{0};
  std::atomic<std::uint64_t> skipped{0};

  void reset() noexcept {
    tested = 0;
    skipped = 0;
  }
};

struct Execution {
  ExecutionStrategy strategy = ExecutionStrategy::SequentialScalar;
  unsigned workers = 0;  // 0: one per hardware thread
  bool skip_ahead = true;
  OpStats* stats = nullptr;

  Execution() = default;
  Execution(ExecutionStrategy s, unsigned w = 0) : strategy(s), workers(w) {}  // NOLINT
};

namespace detail {

struct PlainCells {
  template <class T>
  static T load(T& cell) noexcept { return cell; }
  template <class T>
  static void store(T& cell, T v) noexcept { cell = v; }
  template <class T>
  static void add(T& cell, T v) noexcept { cell += v; }
};

struct SharedCells {
  template <class T>
  static T load(T& cell) noexcept {
    return std::atomic_ref<T>(cell).load(std::memory_order_relaxed);
  }
  template <class T>
  static void store(T& cell, T v) noexcept {
    std::atomic_ref<T>(cell).store(v, std::memory_order_relaxed);
  }
  template <class T>
  static void add(T& cell, T v) noexcept {
    std::atomic_ref<T>(cell).fetch_add(v, std::memory_order_relaxed);
  }
};

struct ScanCounts {
  std::uint64_t tested = 0;
  std::uint64_t skipped = 0;
};

inline void record(const Execution& exec, const ScanCounts& c) noexcept {
  if (!exec.stats) return;
  exec.stats->tested.fetch_add(c.tested, std::memory_order_relaxed);
  exec.stats->skipped.fetch_add(c.skipped, std::memory_order_relaxed);
}

inline void check_length(const KnowledgeBase& kb, std::size_t len, const char* what) {
  if (len != kb.num_individuals()) {
    throw InvalidArgument(std::string(what) + " has length " + std::to_string(len) +
                          ", expected " + std::to_string(kb.num_individuals()));
  }
}

inline void reject_vector(const Execution& exec, const char* op) {
  if (exec.strategy == ExecutionStrategy::ParallelVector) {
    throw InvalidArgument(std::string(op) + " does not support the vector strategy");
  }
}

// Scans seg[begin, end). A subject whose cell already holds `mark` has its
// remaining contiguous assertions skipped; otherwise a matching assertion
// sets the subject's cell to `mark`.
template <class Cells, class Assertion, class SubjectOf, class Matches>
ScanCounts mark_scan(RowSpan out, std::span<const Assertion> seg, std::size_t begin,
                     std::size_t end, std::uint8_t mark, bool skip_ahead,
                     SubjectOf subject_of, Matches matches) {
  ScanCounts counts;
  std::size_t i = begin;
  while (i < end) {
    const IndividualId s = subject_of(seg[i]);
    if (skip_ahead && Cells::load(out[s]) == mark) {
      std::size_t j = i + 1;
      while (j < end && subject_of(seg[j]) == s) ++j;
      counts.skipped += j - i;
      i = j;
      continue;
    }
    ++counts.tested;
    if (matches(seg[i]) && Cells::load(out[s]) != mark) Cells::store(out[s], mark);
    ++i;
  }
  return counts;
}

template <class Assertion, class SubjectOf, class Matches>
void run_mark(RowSpan out, std::span<const Assertion> seg, std::uint8_t mark,
              const Execution& exec, SubjectOf subject_of, Matches matches) {
  std::fill(out.begin(), out.end(), static_cast<std::uint8_t>(1 - mark));
  switch (exec.strategy) {
    case ExecutionStrategy::SequentialScalar:
      record(exec, mark_scan<PlainCells>(out, seg, 0, seg.size(), mark, exec.skip_ahead,
                                         subject_of, matches));
      break;
    case ExecutionStrategy::ParallelScalar:
      parallel::for_chunks(seg.size(), exec.workers, 1, [&](std::size_t b, std::size_t e) {
        record(exec, mark_scan<SharedCells>(out, seg, b, e, mark, exec.skip_ahead,
                                            subject_of, matches));
      });
      break;
    case ExecutionStrategy::EmulatedDeviceParallel:
      parallel::for_each_index(seg.size(), exec.workers, [&](std::size_t i) {
        const IndividualId s = subject_of(seg[i]);
        if (matches(seg[i]) && SharedCells::load(out[s]) != mark) {
          SharedCells::store(out[s], mark);
        }
      });
      record(exec, ScanCounts{seg.size(), 0});
      break;
    case ExecutionStrategy::ParallelVector:
      break;  // rejected by callers
  }
}

template <bool Conj>
void combine_scalar(std::uint8_t* out, std::span<const std::uint8_t* const> rows,
                    std::span<const std::uint8_t> negated, std::size_t begin,
                    std::size_t end) noexcept {
  for (std::size_t i = begin; i < end; ++i) {
    std::uint8_t r = Conj ? 1 : 0;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const std::uint8_t v = rows[j][i] ^ negated[j];
      if constexpr (Conj) {
        r &= v;
      } else {
        r |= v;
      }
    }
    out[i] = r;
  }
}

// `begin` must be a multiple of 16; the remainder below 16 lanes runs scalar.
template <bool Conj>
void combine_vector(std::uint8_t* out, std::span<const std::uint8_t* const> rows,
                    std::span<const std::uint8_t> negated, std::size_t begin,
                    std::size_t end) noexcept {
  std::size_t i = begin;
#if defined(__SSE2__)
  const __m128i init = _mm_set1_epi8(Conj ? 1 : 0);
  for (; i + 16 <= end; i += 16) {
    __m128i r = init;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      __m128i c = _mm_loadu_si128(reinterpret_cast<const __m128i*>(rows[j] + i));
      c = _mm_xor_si128(c, _mm_set1_epi8(static_cast<char>(negated[j])));
      if constexpr (Conj) {
        r = _mm_and_si128(r, c);
      } else {
        r = _mm_or_si128(r, c);
      }
    }
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), r);
  }
#endif
  combine_scalar<Conj>(out, rows, negated, i, end);
}

template <bool Conj>
void combine_into(RowSpan out, const KnowledgeBase& kb, std::span<const RowView> operands,
                  std::span<const std::uint8_t> negated, const Execution& exec) {
  if (operands.size() != negated.size()) {
    throw InvalidArgument("operand and negation lists differ in length (" +
                          std::to_string(operands.size()) + " vs " +
                          std::to_string(negated.size()) + ")");
  }
  check_length(kb, out.size(), "output row");
  std::vector<const std::uint8_t*> rows(operands.size());
  for (std::size_t j = 0; j < operands.size(); ++j) {
    check_length(kb, operands[j].size(), "operand row");
    if (negated[j] > 1) throw InvalidArgument("negation flags must be 0 or 1");
    rows[j] = operands[j].data();
  }

  const std::size_t n = out.size();
  std::uint8_t* dst = out.data();
  switch (exec.strategy) {
    case ExecutionStrategy::SequentialScalar:
      combine_scalar<Conj>(dst, rows, negated, 0, n);
      break;
    case ExecutionStrategy::ParallelScalar:
      parallel::for_chunks(n, exec.workers, 1, [&](std::size_t b, std::size_t e) {
        combine_scalar<Conj>(dst, rows, negated, b, e);
      });
      break;
    case ExecutionStrategy::ParallelVector:
      parallel::for_chunks(n, exec.workers, 16, [&](std::size_t b, std::size_t e) {
        combine_vector<Conj>(dst, rows, negated, b, e);
      });
      break;
    case ExecutionStrategy::EmulatedDeviceParallel:
      parallel::for_each_index(n, exec.workers, [&](std::size_t i) {
        combine_scalar<Conj>(dst, rows, negated, i, i + 1);
      });
      break;
  }
}

template <bool Inverse>
struct RoleEnds {
  static IndividualId subject(const RoleAssertion& a) noexcept { return Inverse ? a.obj : a.subj; }
  static IndividualId object(const RoleAssertion& a) noexcept { return Inverse ? a.subj : a.obj; }
};

template <bool Inverse>
void role_mark(RowSpan out, std::span<const RoleAssertion> seg, RowView filler,
               std::uint8_t mark, std::uint8_t filler_trigger, const Execution& exec) {
  using E = RoleEnds<Inverse>;
  run_mark(out, seg, mark, exec, [](const RoleAssertion& a) { return E::subject(a); },
           [filler, filler_trigger](const RoleAssertion& a) {
             return filler[E::object(a)] == filler_trigger;
           });
}

// Counts matching assertions per contiguous subject run and flushes each
// run's count with one add.
template <class Cells, bool Inverse>
std::uint64_t count_runs(std::span<std::uint32_t> counters, std::span<const RoleAssertion> seg,
                         RowView filler, std::size_t begin, std::size_t end) noexcept {
  using E = RoleEnds<Inverse>;
  std::size_t i = begin;
  while (i < end) {
    const IndividualId s = E::subject(seg[i]);
    std::uint32_t count = 0;
    for (; i < end && E::subject(seg[i]) == s; ++i) count += filler[E::object(seg[i])];
    if (count > 0) Cells::add(counters[s], count);
  }
  return end - begin;
}

template <bool Inverse>
void count_matches(std::span<std::uint32_t> counters, std::span<const RoleAssertion> seg,
                   RowView filler, const Execution& exec) {
  using E = RoleEnds<Inverse>;
  switch (exec.strategy) {
    case ExecutionStrategy::SequentialScalar:
      count_runs<PlainCells, Inverse>(counters, seg, filler, 0, seg.size());
      break;
    case ExecutionStrategy::ParallelScalar:
      parallel::for_chunks(seg.size(), exec.workers, 1, [&](std::size_t b, std::size_t e) {
        count_runs<SharedCells, Inverse>(counters, seg, filler, b, e);
      });
      break;
    case ExecutionStrategy::EmulatedDeviceParallel:
      parallel::for_each_index(seg.size(), exec.workers, [&](std::size_t i) {
        if (filler[E::object(seg[i])] == 1) {
          SharedCells::add(counters[E::subject(seg[i])], std::uint32_t{1});
        }
      });
      break;
    case ExecutionStrategy::ParallelVector:
      break;
  }
  record(exec, ScanCounts{seg.size(), 0});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conjunction / disjunction with per-operand negation.

inline void conjunction_into(RowSpan out, const KnowledgeBase& kb,
                             std::span<const RowView> operands,
                             std::span<const std::uint8_t> negated, const Execution& exec) {
  detail::combine_into<true>(out, kb, operands, negated, exec);
}

inline void disjunction_into(RowSpan out, const KnowledgeBase& kb,
                             std::span<const RowView> operands,
                             std::span<const std::uint8_t> negated, const Execution& exec) {
  detail::combine_into<false>(out, kb, operands, negated, exec);
}

inline MembershipRow conjunction(const KnowledgeBase& kb, std::span<const RowView> operands,
                                 std::span<const std::uint8_t> negated, const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  conjunction_into(out, kb, operands, negated, exec);
  return out;
}

inline MembershipRow disjunction(const KnowledgeBase& kb, std::span<const RowView> operands,
                                 std::span<const std::uint8_t> negated, const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  disjunction_into(out, kb, operands, negated, exec);
  return out;
}

// ---------------------------------------------------------------------------
// Role restrictions. `filler` may be a concept row or any intermediate row.

inline void exists_role_into(RowSpan out, const KnowledgeBase& kb, RoleId role, RowView filler,
                             bool inverse, const Execution& exec) {
  detail::reject_vector(exec, "exists_role");
  detail::check_length(kb, out.size(), "output row");
  detail::check_length(kb, filler.size(), "filler row");
  auto seg = kb.roles().segment_view(to_index(role));
  if (inverse) {
    detail::role_mark<true>(out, seg, filler, 1, 1, exec);
  } else {
    detail::role_mark<false>(out, seg, filler, 1, 1, exec);
  }
}

// Individuals without assertions of the role stay 1.
inline void forall_role_into(RowSpan out, const KnowledgeBase& kb, RoleId role, RowView filler,
                             bool inverse, const Execution& exec) {
  detail::reject_vector(exec, "forall_role");
  detail::check_length(kb, out.size(), "output row");
  detail::check_length(kb, filler.size(), "filler row");
  auto seg = kb.roles().segment_view(to_index(role));
  if (inverse) {
    detail::role_mark<true>(out, seg, filler, 0, 0, exec);
  } else {
    detail::role_mark<false>(out, seg, filler, 0, 0, exec);
  }
}

// `counters` is scratch space of num_individuals entries; on return it holds
// the per-subject match counts.
inline void cardinality_role_into(RowSpan out, std::span<std::uint32_t> counters,
                                  const KnowledgeBase& kb, RoleId role, RowView filler,
                                  CardinalityKind kind, std::uint32_t bound, bool inverse,
                                  const Execution& exec) {
  detail::reject_vector(exec, "cardinality_role");
  detail::check_length(kb, out.size(), "output row");
  detail::check_length(kb, filler.size(), "filler row");
  detail::check_length(kb, counters.size(), "counter array");
  auto seg = kb.roles().segment_view(to_index(role));

  std::fill(out.begin(), out.end(), std::uint8_t{0});
  std::fill(counters.begin(), counters.end(), std::uint32_t{0});
  if (inverse) {
    detail::count_matches<true>(counters, seg, filler, exec);
  } else {
    detail::count_matches<false>(counters, seg, filler, exec);
  }

  auto filter = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      out[i] = cardinality_holds(kind, counters[i], bound) ? 1 : 0;
    }
  };
  if (exec.strategy == ExecutionStrategy::SequentialScalar) {
    filter(0, out.size());
  } else {
    parallel::for_chunks(out.size(), exec.workers, 64, filter);
  }
}

// ---------------------------------------------------------------------------
// Concrete-role restrictions (existential).

inline void exists_numeric_into(RowSpan out, const KnowledgeBase& kb, NumericRoleId role,
                                NumericComparator cmp, float bound, const Execution& exec) {
  detail::reject_vector(exec, "exists_numeric");
  detail::check_length(kb, out.size(), "output row");
  if (std::isnan(bound)) throw InvalidArgument("numeric restriction bound is NaN");
  auto seg = kb.numeric_roles().segment_view(to_index(role));
  detail::run_mark(out, seg, 1, exec, [](const NumericAssertion& a) { return a.subj; },
                   [cmp, bound](const NumericAssertion& a) {
                     return numeric_holds(cmp, a.val, bound);
                   });
}

// An unknown value cannot match anything, so the scan is skipped entirely.
inline void string_equal_into(RowSpan out, const KnowledgeBase& kb, StringRoleId role,
                              std::string_view value, const Execution& exec) {
  detail::reject_vector(exec, "string_equal");
  detail::check_length(kb, out.size(), "output row");
  auto seg = kb.string_roles().segment_view(to_index(role));
  const std::optional<ValueIndex> id = resolve_string(kb, value);
  if (!id) {
    std::fill(out.begin(), out.end(), std::uint8_t{0});
    return;
  }
  detail::run_mark(out, seg, 1, exec, [](const StringAssertion& a) { return a.subj; },
                   [want = *id](const StringAssertion& a) { return a.val_index == want; });
}

inline void string_contain_into(RowSpan out, const KnowledgeBase& kb, StringRoleId role,
                                std::string_view pattern, const Execution& exec) {
  detail::reject_vector(exec, "string_contain");
  detail::check_length(kb, out.size(), "output row");
  if (pattern.empty()) throw InvalidArgument("CONTAIN pattern must not be empty");
  auto seg = kb.string_roles().segment_view(to_index(role));
  detail::run_mark(out, seg, 1, exec, [](const StringAssertion& a) { return a.subj; },
                   [pattern](const StringAssertion& a) {
                     return a.val.find(pattern) != std::string_view::npos;
                   });
}

// ---------------------------------------------------------------------------
// Allocating wrappers.

inline MembershipRow exists_role(const KnowledgeBase& kb, RoleId role, RowView filler,
                                 bool inverse, const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  exists_role_into(out, kb, role, filler, inverse, exec);
  return out;
}

inline MembershipRow forall_role(const KnowledgeBase& kb, RoleId role, RowView filler,
                                 bool inverse, const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  forall_role_into(out, kb, role, filler, inverse, exec);
  return out;
}

inline MembershipRow cardinality_role(const KnowledgeBase& kb, RoleId role, RowView filler,
                                      CardinalityKind kind, std::uint32_t bound, bool inverse,
                                      const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  std::vector<std::uint32_t> counters(kb.num_individuals());
  cardinality_role_into(out, counters, kb, role, filler, kind, bound, inverse, exec);
  return out;
}

inline MembershipRow exists_numeric(const KnowledgeBase& kb, NumericRoleId role,
                                    NumericComparator cmp, float bound, const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  exists_numeric_into(out, kb, role, cmp, bound, exec);
  return out;
}

inline MembershipRow string_equal(const KnowledgeBase& kb, StringRoleId role,
                                  std::string_view value, const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  string_equal_into(out, kb, role, value, exec);
  return out;
}

inline MembershipRow string_contain(const KnowledgeBase& kb, StringRoleId role,
                                    std::string_view pattern, const Execution& exec) {
  MembershipRow out(kb.num_individuals());
  string_contain_into(out, kb, role, pattern, exec);
  return out;
}

}  // namespace dleval
