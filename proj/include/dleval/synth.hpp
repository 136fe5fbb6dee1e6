#pragma once

// Synthetic datasets and hypothesis batches.
//
// SingleSubject: every assertion has subject 0 and a distinct object, so all
// parallel writes hit the same output cell. UniqueSubject: every assertion has
// its own subject and its own object, so writes never collide. Concrete-role
// assertions follow the same subject layout with one fixed value.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dleval/error.hpp"
#include "dleval/kb.hpp"
#include "dleval/kb_text.hpp"

namespace dleval {

// Stateless counter-based generator: value(k) depends only on (seed, stream, k).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t at(std::uint64_t counter) const noexcept {
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (counter + 1) +
                      0xD1B54A32D192ED03ull * (stream_ + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t next() noexcept { return at(counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform_at(std::uint64_t counter) const noexcept {
    return static_cast<double>(at(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
  }

  bool chance(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

enum class Regime { SingleSubject, UniqueSubject };

inline std::string_view to_string(Regime r) noexcept {
  return r == Regime::SingleSubject ? "single-subject" : "unique-subject";
}

struct DatasetSpec {
  Regime regime = Regime::SingleSubject;
  std::size_t num_assertions = 0;
  std::optional<std::size_t> num_individuals;  // nullopt: smallest feasible
  std::size_t num_concepts = 8;
  double density = 0.5;
  std::uint64_t seed = 1;
  float numeric_value = 18.0f;
  std::string string_value = "synthetic value";
};

inline std::size_t required_individuals(Regime regime, std::size_t assertions) noexcept {
  if (assertions == 0) return 0;
  return regime == Regime::SingleSubject ? assertions + 1 : assertions;
}

// Names used by generated datasets.
inline constexpr std::string_view kSynthRole = "r";
inline constexpr std::string_view kSynthNumericRole = "num";
inline constexpr std::string_view kSynthStringRole = "str";

inline std::size_t dataset_individuals(const DatasetSpec& spec) {
  if (spec.num_individuals) return *spec.num_individuals;
  if (spec.regime == Regime::UniqueSubject) return 2 * spec.num_assertions;
  return required_individuals(spec.regime, spec.num_assertions);
}

inline KnowledgeBase build_dataset(const DatasetSpec& spec) {
  if (!(spec.density >= 0.0 && spec.density <= 1.0)) {
    throw InvalidArgument("density must lie in [0, 1]");
  }
  const std::size_t n = dataset_individuals(spec);
  const std::size_t need = required_individuals(spec.regime, spec.num_assertions);
  if (n < need) {
    throw InvalidArgument(std::string(to_string(spec.regime)) + " with " +
                          std::to_string(spec.num_assertions) + " assertions needs at least " +
                          std::to_string(need) + " individuals, got " + std::to_string(n));
  }

  KnowledgeBaseBuilder b;
  for (std::size_t c = 0; c < spec.num_concepts; ++c) b.add_concept("C" + std::to_string(c));
  const RoleId role = b.add_role(std::string(kSynthRole));
  const NumericRoleId num = b.add_numeric_role(std::string(kSynthNumericRole));
  const StringRoleId str = b.add_string_role(std::string(kSynthStringRole));
  for (std::size_t i = 0; i < n; ++i) b.add_individual("i" + std::to_string(i));

  const CounterRng membership(spec.seed, 1);
  for (std::size_t c = 0; c < spec.num_concepts; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (membership.uniform_at(c * n + i) < spec.density) {
        b.assert_concept(ConceptId{static_cast<std::uint32_t>(c)}, static_cast<IndividualId>(i));
      }
    }
  }

  const std::size_t m = spec.num_assertions;
  const bool disjoint = n >= 2 * m;
  for (std::size_t k = 0; k < m; ++k) {
    IndividualId subj = 0;
    IndividualId obj = 0;
    if (spec.regime == Regime::SingleSubject) {
      obj = static_cast<IndividualId>(k + 1);
    } else {
      subj = static_cast<IndividualId>(k);
      obj = static_cast<IndividualId>(disjoint ? m + k : (k + 1) % n);
    }
    b.assert_role(role, subj, obj);
    b.assert_numeric(num, subj, spec.numeric_value);
    b.assert_string(str, subj, spec.string_value);
  }

  // Seeded Fisher-Yates; the first half becomes positive examples.
  std::vector<IndividualId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<IndividualId>(i);
  CounterRng shuffle(spec.seed, 2);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[shuffle.below(i)]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    b.mark_example(order[i], i < n / 2 ? ExampleLabel::Positive : ExampleLabel::Negative);
  }
  return std::move(b).build();
}

inline std::string gen_dataset(const DatasetSpec& spec) { return write_kb(build_dataset(spec)); }

// ---------------------------------------------------------------------------
// Hypothesis batches.

enum class HypothesisTemplate { Conj5, RandomMixed };

namespace detail {

class MixedGenerator {
 public:
  MixedGenerator(const KnowledgeBase& kb, CounterRng& rng) : kb_(kb), rng_(rng) {
    for (const NumericAssertion& a : kb.numeric_roles().assertions()) {
      if (a.val == a.val) numbers_.push_back(a.val);
    }
    for (std::size_t v = 0; v < kb.string_values().size(); ++v) {
      strings_.emplace_back(kb.string_values().value(static_cast<ValueIndex>(v)));
    }
  }

  std::string expr(int depth) {
    const NameMaps& names = kb_.names();
    const bool roles = names.roles.size() > 0;
    const bool numeric = names.numeric_roles.size() > 0;
    const bool strings = names.string_roles.size() > 0;
    if (depth <= 0) {
      const auto pick = rng_.below(4);
      if (pick == 1 && numeric) return numeric_restriction();
      if (pick == 2 && strings) return string_restriction();
      return concept_name();
    }
    switch (rng_.below(9)) {
      case 0:
      case 1:
        return combination(depth, rng_.chance(0.5) ? "AND" : "OR");
      case 2:
        if (roles) return "(SOME " + role() + ' ' + expr(depth - 1) + ')';
        break;
      case 3:
        if (roles) return "(ONLY " + role() + ' ' + expr(depth - 1) + ')';
        break;
      case 4:
      case 5: {
        if (!roles) break;
        static constexpr const char* kinds[] = {"MIN", "EXACTLY", "MAX"};
        return std::string("(") + kinds[rng_.below(3)] + ' ' + std::to_string(rng_.below(4)) +
               ' ' + role() + ' ' + expr(depth - 1) + ')';
      }
      case 6:
        if (numeric) return numeric_restriction();
        break;
      case 7:
        if (strings) return string_restriction();
        break;
      default:
        break;
    }
    return concept_name();
  }

 private:
  std::string concept_name() {
    const NameTable& t = kb_.names().concepts;
    return t.name(static_cast<std::uint32_t>(rng_.below(t.size())));
  }

  std::string role() {
    const NameTable& t = kb_.names().roles;
    std::string name = t.name(static_cast<std::uint32_t>(rng_.below(t.size())));
    return rng_.chance(0.3) ? "(INV " + name + ')' : name;
  }

  std::string combination(int depth, const char* op) {
    std::string s = std::string("(") + op;
    const auto k = 1 + rng_.below(4);
    for (std::uint64_t j = 0; j < k; ++j) {
      s += ' ';
      s += rng_.chance(0.3) ? "(NOT " + concept_name() + ')' : expr(depth - 1);
    }
    return s + ')';
  }

  std::string numeric_restriction() {
    const NameTable& t = kb_.names().numeric_roles;
    static constexpr const char* cmps[] = {">=", "==", "<="};
    float v = 0.0f;
    if (!numbers_.empty() && rng_.chance(0.7)) {
      v = numbers_[rng_.below(numbers_.size())];
    } else {
      v = static_cast<float>(rng_.below(2001)) / 10.0f - 100.0f;
    }
    return "(DSOME " + t.name(static_cast<std::uint32_t>(rng_.below(t.size()))) + ' ' +
           cmps[rng_.below(3)] + ' ' + text::format_float(v) + ')';
  }

  std::string string_restriction() {
    const NameTable& t = kb_.names().string_roles;
    std::string role = t.name(static_cast<std::uint32_t>(rng_.below(t.size())));
    std::string value;
    const bool contain = rng_.chance(0.5);
    if (!strings_.empty() && rng_.chance(0.7)) {
      value = strings_[rng_.below(strings_.size())];
      if (contain && !value.empty()) {
        const auto start = rng_.below(value.size());
        const auto len = 1 + rng_.below(value.size() - start);
        value = value.substr(start, len);
      }
    } else {
      value = "absent" + std::to_string(rng_.below(1000));
    }
    if (contain && value.empty()) value = "x";
    return "(SSOME " + role + (contain ? " CONTAIN " : " EQUAL ") + text::quote(value) + ')';
  }

  const KnowledgeBase& kb_;
  CounterRng& rng_;
  std::vector<float> numbers_;
  std::vector<std::string> strings_;
};

}  // namespace detail

inline std::vector<std::string> gen_hypothesis_batch(std::size_t n, HypothesisTemplate tmpl,
                                                     const KnowledgeBase& kb, std::uint64_t seed) {
  std::vector<std::string> out;
  if (n == 0) return out;
  out.reserve(n);
  CounterRng rng(seed, 3);
  const NameTable& concepts = kb.names().concepts;

  if (tmpl == HypothesisTemplate::Conj5) {
    if (concepts.size() < 5) throw InvalidArgument("Conj5 needs at least 5 concepts");
    std::vector<std::uint32_t> ids(concepts.size());
    for (std::uint32_t c = 0; c < ids.size(); ++c) ids[c] = c;
    for (std::size_t h = 0; h < n; ++h) {
      // Partial Fisher-Yates: five distinct concepts.
      for (std::size_t j = 0; j < 5; ++j) {
        std::swap(ids[j], ids[j + rng.below(ids.size() - j)]);
      }
      std::string s = "(AND";
      for (std::size_t j = 0; j < 5; ++j) s += ' ' + concepts.name(ids[j]);
      out.push_back(s + ')');
    }
    return out;
  }

  if (concepts.size() == 0) throw InvalidArgument("RandomMixed needs at least one concept");
  detail::MixedGenerator gen(kb, rng);
  for (std::size_t h = 0; h < n; ++h) out.push_back(gen.expr(1 + static_cast<int>(rng.below(3))));
  return out;
}

}  // namespace dleval
