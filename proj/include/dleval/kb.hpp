#pragma once

// Matrix-based knowledge representation.
//
// Concept memberships are stored transposed (one contiguous byte row per
// concept, one column per individual). Role and concrete-role assertions are
// two-column tables sorted by (role, subject); a per-role offset table gives
// the inclusive [start, end] segment of each role. Everything is immutable
// once KnowledgeBaseBuilder::build() returns.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dleval/error.hpp"

namespace dleval {

using IndividualId = std::uint32_t;
using ValueIndex = std::uint32_t;

enum class ConceptId : std::uint32_t {};
enum class RoleId : std::uint32_t {};
enum class NumericRoleId : std::uint32_t {};
enum class StringRoleId : std::uint32_t {};

template <class Id>
constexpr std::uint32_t to_index(Id id) noexcept {
  return static_cast<std::uint32_t>(id);
}

struct RoleAssertion {
  IndividualId subj;
  IndividualId obj;
};

struct NumericAssertion {
  IndividualId subj;
  float val;
};

struct StringAssertion {
  IndividualId subj;
  ValueIndex val_index;
  std::string_view val;  // points into the owning KB's StringValueMap
};

// Inclusive bounds of one role's segment in its assertion table.
struct SegmentBounds {
  std::size_t start;
  std::size_t end;

  std::size_t size() const noexcept { return end - start + 1; }
  friend bool operator==(const SegmentBounds&, const SegmentBounds&) = default;
};

// Raw offset-table entry. An empty segment is encoded as start == end + 1.
struct SegmentOffset {
  std::int64_t start;
  std::int64_t end;
};

template <class Assertion>
class AssertionTable {
 public:
  std::span<const Assertion> assertions() const noexcept { return assertions_; }
  std::span<const SegmentOffset> offsets() const noexcept { return offsets_; }
  std::size_t role_count() const noexcept { return offsets_.size(); }

  std::optional<SegmentBounds> segment(std::uint32_t role) const {
    const SegmentOffset& off = offset(role);
    if (off.start > off.end) return std::nullopt;
    return SegmentBounds{static_cast<std::size_t>(off.start),
                         static_cast<std::size_t>(off.end)};
  }

  // The role's assertions as a view; empty for an empty segment.
  std::span<const Assertion> segment_view(std::uint32_t role) const {
    const SegmentOffset& off = offset(role);
    if (off.start > off.end) return {};
    return std::span<const Assertion>(assertions_).subspan(
        static_cast<std::size_t>(off.start),
        static_cast<std::size_t>(off.end - off.start + 1));
  }

 private:
  friend class KnowledgeBaseBuilder;

  const SegmentOffset& offset(std::uint32_t role) const {
    if (role >= offsets_.size()) {
      throw InvalidArgument("unknown role id " + std::to_string(role));
    }
    return offsets_[role];
  }

  std::vector<Assertion> assertions_;
  std::vector<SegmentOffset> offsets_;
};

using RoleTable = AssertionTable<RoleAssertion>;
using NumericRoleTable = AssertionTable<NumericAssertion>;
using StringRoleTable = AssertionTable<StringAssertion>;

class ConceptsMatrix {
 public:
  ConceptsMatrix() = default;
  ConceptsMatrix(std::size_t concepts, std::size_t individuals)
      : rows_(concepts), cols_(individuals), cells_(concepts * individuals, 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const std::uint8_t> cells() const noexcept { return cells_; }

  std::span<const std::uint8_t> row(ConceptId c) const {
    if (to_index(c) >= rows_) {
      throw InvalidArgument("unknown concept id " + std::to_string(to_index(c)));
    }
    return std::span<const std::uint8_t>(cells_).subspan(to_index(c) * cols_, cols_);
  }

  std::uint8_t at(ConceptId c, IndividualId i) const { return row(c)[i]; }

 private:
  friend class KnowledgeBaseBuilder;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Interning table for string-role values. Ids are dense, in first-intern order.
class StringValueMap {
 public:
  StringValueMap() = default;
  StringValueMap(StringValueMap&&) noexcept = default;
  StringValueMap& operator=(StringValueMap&&) noexcept = default;
  // Views handed out by value() point at the map's own nodes.
  StringValueMap(const StringValueMap&) = delete;
  StringValueMap& operator=(const StringValueMap&) = delete;

  ValueIndex intern(std::string_view s) {
    auto [it, inserted] =
        index_.try_emplace(std::string(s), static_cast<ValueIndex>(values_.size()));
    if (inserted) values_.push_back(&it->first);
    return it->second;
  }

  std::optional<ValueIndex> find(std::string_view s) const {
    auto it = index_.find(std::string(s));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::string_view value(ValueIndex id) const {
    if (id >= values_.size()) {
      throw InvalidArgument("unknown string value id " + std::to_string(id));
    }
    return *values_[id];
  }

  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::unordered_map<std::string, ValueIndex> index_;
  std::vector<const std::string*> values_;
};

struct ExampleFlags {
  std::uint8_t pos = 0;
  std::uint8_t neg = 0;
};

enum class ExampleLabel { Positive, Negative };

class ExamplesTable {
 public:
  std::span<const ExampleFlags> flags() const noexcept { return flags_; }
  std::size_t positives() const noexcept { return positives_; }
  std::size_t negatives() const noexcept { return negatives_; }

 private:
  friend class KnowledgeBaseBuilder;

  std::vector<ExampleFlags> flags_;
  std::size_t positives_ = 0;
  std::size_t negatives_ = 0;
};

// Dense name <-> id map for one entity kind.
class NameTable {
 public:
  std::optional<std::uint32_t> find(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(std::uint32_t id) const {
    if (id >= names_.size()) throw InvalidArgument("unknown id " + std::to_string(id));
    return names_[id];
  }

  std::size_t size() const noexcept { return names_.size(); }
  std::span<const std::string> names() const noexcept { return names_; }

  // Returns nullopt when the name is already present.
  std::optional<std::uint32_t> add(std::string name) {
    auto id = static_cast<std::uint32_t>(names_.size());
    if (!ids_.try_emplace(name, id).second) return std::nullopt;
    names_.push_back(std::move(name));
    return id;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct NameMaps {
  NameTable individuals;
  NameTable concepts;
  NameTable roles;
  NameTable numeric_roles;
  NameTable string_roles;
};

// Immutable after construction; safe for concurrent readers. Move-only because
// string assertions reference the interned values by address.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  KnowledgeBase(KnowledgeBase&&) noexcept = default;
  KnowledgeBase& operator=(KnowledgeBase&&) noexcept = default;
  KnowledgeBase(const KnowledgeBase&) = delete;
  KnowledgeBase& operator=(const KnowledgeBase&) = delete;

  std::size_t num_individuals() const noexcept { return num_individuals_; }
  const ConceptsMatrix& concepts() const noexcept { return concepts_; }
  const RoleTable& roles() const noexcept { return roles_; }
  const NumericRoleTable& numeric_roles() const noexcept { return numeric_roles_; }
  const StringRoleTable& string_roles() const noexcept { return string_roles_; }
  const StringValueMap& string_values() const noexcept { return string_values_; }
  const ExamplesTable& examples() const noexcept { return examples_; }
  const NameMaps& names() const noexcept { return names_; }

 private:
  friend class KnowledgeBaseBuilder;

  std::size_t num_individuals_ = 0;
  ConceptsMatrix concepts_;
  RoleTable roles_;
  NumericRoleTable numeric_roles_;
  StringRoleTable string_roles_;
  StringValueMap string_values_;
  ExamplesTable examples_;
  NameMaps names_;
};

inline std::optional<SegmentBounds> role_segment(const KnowledgeBase& kb, RoleId role) {
  return kb.roles().segment(to_index(role));
}

inline std::optional<ValueIndex> resolve_string(const KnowledgeBase& kb, std::string_view s) {
  return kb.string_values().find(s);
}

// Accumulates declarations and assertions; build() sorts every assertion
// table by (role, subject) and lays out the matrices. Ids are dense and
// assigned in call order.
class KnowledgeBaseBuilder {
 public:
  IndividualId add_individual(std::string name) {
    return declare(names_.individuals, std::move(name), "individual");
  }
  ConceptId add_concept(std::string name) {
    return ConceptId{declare(names_.concepts, std::move(name), "concept")};
  }
  RoleId add_role(std::string name) {
    return RoleId{declare(names_.roles, std::move(name), "role")};
  }
  NumericRoleId add_numeric_role(std::string name) {
    return NumericRoleId{declare(names_.numeric_roles, std::move(name), "numeric role")};
  }
  StringRoleId add_string_role(std::string name) {
    return StringRoleId{declare(names_.string_roles, std::move(name), "string role")};
  }

  const NameMaps& names() const noexcept { return names_; }

  void assert_concept(ConceptId c, IndividualId i) {
    check(names_.concepts, to_index(c), "concept");
    check(names_.individuals, i, "individual");
    concept_assertions_.emplace_back(to_index(c), i);
  }

  void assert_role(RoleId r, IndividualId subj, IndividualId obj) {
    check(names_.roles, to_index(r), "role");
    check(names_.individuals, subj, "individual");
    check(names_.individuals, obj, "individual");
    role_assertions_.push_back({to_index(r), {subj, obj}});
  }

  void assert_numeric(NumericRoleId r, IndividualId subj, float val) {
    check(names_.numeric_roles, to_index(r), "numeric role");
    check(names_.individuals, subj, "individual");
    numeric_assertions_.push_back({to_index(r), {subj, val}});
  }

  void assert_string(StringRoleId r, IndividualId subj, std::string_view val) {
    check(names_.string_roles, to_index(r), "string role");
    check(names_.individuals, subj, "individual");
    ValueIndex idx = values_.intern(val);
    string_assertions_.push_back({to_index(r), {subj, idx, {}}});
  }

  void mark_example(IndividualId i, ExampleLabel label) {
    check(names_.individuals, i, "individual");
    auto [it, inserted] = labels_.try_emplace(i, label);
    if (!inserted && it->second != label) {
      throw InvalidArgument("individual '" + names_.individuals.name(i) +
                            "' is marked both positive and negative");
    }
  }

  KnowledgeBase build() && {
    KnowledgeBase kb;
    const std::size_t n = names_.individuals.size();
    kb.num_individuals_ = n;

    kb.concepts_ = ConceptsMatrix(names_.concepts.size(), n);
    for (auto [c, i] : concept_assertions_) kb.concepts_.cells_[c * n + i] = 1;

    layout(role_assertions_, names_.roles.size(), kb.roles_);
    layout(numeric_assertions_, names_.numeric_roles.size(), kb.numeric_roles_);
    layout(string_assertions_, names_.string_roles.size(), kb.string_roles_);

    kb.string_values_ = std::move(values_);
    for (StringAssertion& a : kb.string_roles_.assertions_) {
      a.val = kb.string_values_.value(a.val_index);
    }

    kb.examples_.flags_.assign(n, ExampleFlags{});
    for (auto [i, label] : labels_) {
      if (label == ExampleLabel::Positive) {
        kb.examples_.flags_[i].pos = 1;
        ++kb.examples_.positives_;
      } else {
        kb.examples_.flags_[i].neg = 1;
        ++kb.examples_.negatives_;
      }
    }

    kb.names_ = std::move(names_);
    return kb;
  }

 private:
  template <class Assertion>
  struct Tagged {
    std::uint32_t role;
    Assertion assertion;
  };

  static std::uint32_t declare(NameTable& table, std::string name, const char* what) {
    auto id = table.add(name);
    if (!id) throw InvalidArgument(std::string("duplicate ") + what + " '" + name + "'");
    return *id;
  }

  static void check(const NameTable& table, std::uint32_t id, const char* what) {
    if (id >= table.size()) {
      throw InvalidArgument(std::string("unknown ") + what + " id " + std::to_string(id));
    }
  }

  template <class Assertion>
  static void layout(std::vector<Tagged<Assertion>>& tagged, std::size_t roles,
                     AssertionTable<Assertion>& table) {
    std::stable_sort(tagged.begin(), tagged.end(), [](const auto& a, const auto& b) {
      if (a.role != b.role) return a.role < b.role;
      return a.assertion.subj < b.assertion.subj;
    });
    table.assertions_.clear();
    table.assertions_.reserve(tagged.size());
    table.offsets_.assign(roles, SegmentOffset{0, -1});

    std::size_t i = 0;
    for (std::uint32_t r = 0; r < roles; ++r) {
      const auto start = static_cast<std::int64_t>(i);
      while (i < tagged.size() && tagged[i].role == r) {
        table.assertions_.push_back(tagged[i].assertion);
        ++i;
      }
      table.offsets_[r] = SegmentOffset{start, static_cast<std::int64_t>(i) - 1};
    }
    tagged.clear();
    tagged.shrink_to_fit();
  }

  NameMaps names_;
  StringValueMap values_;
  std::vector<std::pair<std::uint32_t, IndividualId>> concept_assertions_;
  std::vector<Tagged<RoleAssertion>> role_assertions_;
  std::vector<Tagged<NumericAssertion>> numeric_assertions_;
  std::vector<Tagged<StringAssertion>> string_assertions_;
  std::unordered_map<IndividualId, ExampleLabel> labels_;
};

}  // namespace dleval
