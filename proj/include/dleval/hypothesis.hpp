#pragma once

// Hypotheses as flat operation arrays.
//
// An expression tree is flattened in post-order: every node's inputs are
// concept rows or nodes that appear earlier in the array, and the last node
// is the root. A plan assigns each node a physical results row (reusing rows
// after their last consumer) and the executor runs the nodes in order.
//
// Grammar (whitespace-insensitive):
//   expr    := NAME
//            | "(" ("AND" | "OR") operand+ ")"
//            | "(" ("SOME" | "ONLY") role expr ")"
//            | "(" ("MIN" | "EXACTLY" | "MAX") INT role expr ")"
//            | "(" "DSOME" NAME (">=" | "==" | "<=") DECIMAL ")"
//            | "(" "SSOME" NAME ("EQUAL" | "CONTAIN") STRING ")"
//   operand := expr | "(" "NOT" NAME ")"
//   role    := NAME | "(" "INV" NAME ")"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dleval/dl_ops.hpp"
#include "dleval/error.hpp"
#include "dleval/kb.hpp"
#include "dleval/kb_text.hpp"

namespace dleval {

enum class NodeKind : std::uint8_t {
  Conjunction,
  Disjunction,
  ExistsRole,
  ForallRole,
  CardinalityRole,
  ExistsNumeric,
  StringEqual,
  StringContain,
};

inline constexpr std::size_t kNodeKindCount = 8;

inline std::string_view to_string(NodeKind k) noexcept {
  switch (k) {
    case NodeKind::Conjunction: return "conjunction";
    case NodeKind::Disjunction: return "disjunction";
    case NodeKind::ExistsRole: return "exists-role";
    case NodeKind::ForallRole: return "forall-role";
    case NodeKind::CardinalityRole: return "cardinality-role";
    case NodeKind::ExistsNumeric: return "exists-numeric";
    case NodeKind::StringEqual: return "string-equal";
    case NodeKind::StringContain: return "string-contain";
  }
  return "?";
}

struct OperandRef {
  enum class Source : std::uint8_t { Concept, Node };

  Source source = Source::Concept;
  bool negated = false;
  std::uint32_t id = 0;  // concept id or node index

  friend bool operator==(const OperandRef&, const OperandRef&) = default;
};

struct DLOperationNode {
  NodeKind kind = NodeKind::Conjunction;

  // Conjunction / Disjunction: range into Hypothesis::operands.
  std::uint32_t first_operand = 0;
  std::uint32_t operand_count = 0;

  // Restrictions. `role` indexes the role, numeric-role or string-role table
  // depending on `kind`.
  std::uint32_t role = 0;
  bool inverse = false;
  OperandRef filler{};
  CardinalityKind cardinality = CardinalityKind::Min;
  std::uint32_t count = 0;
  NumericComparator comparator = NumericComparator::Min;
  float threshold = 0.0f;
  std::uint32_t text = 0;  // index into Hypothesis::strings

  std::uint32_t output_row = 0;  // logical row; equals the node index
};

struct Hypothesis {
  std::vector<DLOperationNode> nodes;
  std::vector<OperandRef> operands;
  std::vector<std::string> strings;
  std::string source;

  const DLOperationNode& root() const { return nodes.back(); }

  std::span<const OperandRef> operands_of(const DLOperationNode& n) const {
    return std::span<const OperandRef>(operands).subspan(n.first_operand, n.operand_count);
  }
};

namespace detail {

struct Token {
  enum class Type { Open, Close, Atom, String, End };
  Type type;
  std::string text;
  std::size_t pos;
};

class HypothesisLexer {
 public:
  explicit HypothesisLexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && is_ws(src_[pos_])) ++pos_;
    if (pos_ >= src_.size()) return {Token::Type::End, {}, pos_};
    const std::size_t start = pos_;
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      return {Token::Type::Open, "(", start};
    }
    if (c == ')') {
      ++pos_;
      return {Token::Type::Close, ")", start};
    }
    if (c == '"') {
      std::string error;
      text::Quoted q = text::parse_quoted(src_.substr(pos_), error);
      if (!error.empty()) throw ParseError(error + " at offset " + std::to_string(start), start);
      pos_ += q.consumed;
      return {Token::Type::String, std::move(q.value), start};
    }
    while (pos_ < src_.size() && !is_ws(src_[pos_]) && src_[pos_] != '(' &&
           src_[pos_] != ')' && src_[pos_] != '"') {
      ++pos_;
    }
    return {Token::Type::Atom, std::string(src_.substr(start, pos_ - start)), start};
  }

 private:
  static bool is_ws(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class HypothesisParser {
 public:
  HypothesisParser(std::string_view text, const KnowledgeBase& kb) : lex_(text), kb_(kb) {
    hyp_.source = std::string(text);
    advance();
  }

  Hypothesis parse() && {
    Parsed top = expr();
    if (tok_.type != Token::Type::End) fail("unexpected trailing input '" + tok_.text + "'");
    if (top.source == OperandRef::Source::Concept) {
      // A bare concept is evaluated as a one-operand conjunction.
      emit_combination(NodeKind::Conjunction, {OperandRef{OperandRef::Source::Concept, false, top.id}});
    }
    return std::move(hyp_);
  }

 private:
  struct Parsed {
    OperandRef::Source source;
    std::uint32_t id;
  };

  [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, tok_.pos); }
  [[noreturn]] static void fail_at(const std::string& msg, std::size_t pos) {
    throw ParseError(msg + " at offset " + std::to_string(pos), pos);
  }

  void advance() { tok_ = lex_.next(); }

  void expect(Token::Type type, const char* what) {
    if (tok_.type != type) {
      fail(std::string("expected ") + what +
           (tok_.type == Token::Type::End ? " but input ended" : " but found '" + tok_.text + "'"));
    }
    advance();
  }

  std::string take_atom(const char* what) {
    if (tok_.type != Token::Type::Atom) fail(std::string("expected ") + what);
    std::string s = std::move(tok_.text);
    advance();
    return s;
  }

  std::uint32_t resolve(const NameTable& table, const char* what) {
    const std::size_t pos = tok_.pos;
    std::string name = take_atom(what);
    auto id = table.find(name);
    if (!id) fail_at(std::string("unknown ") + what + " '" + name + "'", pos);
    return *id;
  }

  Parsed expr() {
    if (tok_.type == Token::Type::Atom) {
      return {OperandRef::Source::Concept, resolve(kb_.names().concepts, "concept")};
    }
    if (tok_.type != Token::Type::Open) {
      fail(tok_.type == Token::Type::End ? "unexpected end of input"
                                         : "unexpected token '" + tok_.text + "'");
    }
    advance();
    const std::size_t op_pos = tok_.pos;
    const std::string op = take_atom("operator");

    std::uint32_t node = 0;
    if (op == "AND" || op == "OR") {
      node = combination(op == "AND" ? NodeKind::Conjunction : NodeKind::Disjunction);
    } else if (op == "SOME" || op == "ONLY") {
      auto [role, inverse] = role_ref();
      OperandRef filler = filler_ref();
      DLOperationNode n;
      n.kind = op == "SOME" ? NodeKind::ExistsRole : NodeKind::ForallRole;
      n.role = role;
      n.inverse = inverse;
      n.filler = filler;
      node = emit(n);
    } else if (op == "MIN" || op == "EXACTLY" || op == "MAX") {
      const std::uint32_t count = cardinality_count();
      auto [role, inverse] = role_ref();
      OperandRef filler = filler_ref();
      DLOperationNode n;
      n.kind = NodeKind::CardinalityRole;
      n.cardinality = op == "MIN"       ? CardinalityKind::Min
                      : op == "EXACTLY" ? CardinalityKind::Exactly
                                        : CardinalityKind::Max;
      n.count = count;
      n.role = role;
      n.inverse = inverse;
      n.filler = filler;
      node = emit(n);
    } else if (op == "DSOME") {
      DLOperationNode n;
      n.kind = NodeKind::ExistsNumeric;
      n.role = resolve(kb_.names().numeric_roles, "numeric role");
      const std::size_t cmp_pos = tok_.pos;
      const std::string cmp = take_atom("comparator");
      if (cmp == ">=") {
        n.comparator = NumericComparator::Min;
      } else if (cmp == "==") {
        n.comparator = NumericComparator::Exact;
      } else if (cmp == "<=") {
        n.comparator = NumericComparator::Max;
      } else {
        fail_at("expected '>=', '==' or '<=' but found '" + cmp + "'", cmp_pos);
      }
      const std::size_t num_pos = tok_.pos;
      const std::string num = take_atom("decimal");
      if (!text::parse_float(num, n.threshold) || std::isnan(n.threshold)) {
        fail_at("invalid decimal '" + num + "'", num_pos);
      }
      node = emit(n);
    } else if (op == "SSOME") {
      DLOperationNode n;
      n.role = resolve(kb_.names().string_roles, "string role");
      const std::size_t mode_pos = tok_.pos;
      const std::string mode = take_atom("EQUAL or CONTAIN");
      if (mode == "EQUAL") {
        n.kind = NodeKind::StringEqual;
      } else if (mode == "CONTAIN") {
        n.kind = NodeKind::StringContain;
      } else {
        fail_at("expected EQUAL or CONTAIN but found '" + mode + "'", mode_pos);
      }
      if (tok_.type != Token::Type::String) fail("expected a quoted string");
      if (n.kind == NodeKind::StringContain && tok_.text.empty()) {
        fail("CONTAIN pattern must not be empty");
      }
      n.text = static_cast<std::uint32_t>(hyp_.strings.size());
      hyp_.strings.push_back(std::move(tok_.text));
      advance();
      node = emit(n);
    } else if (op == "NOT") {
      fail_at("NOT is only allowed as a direct AND/OR operand", op_pos);
    } else {
      fail_at("unknown operator '" + op + "'", op_pos);
    }
    expect(Token::Type::Close, "')'");
    return {OperandRef::Source::Node, node};
  }

  std::uint32_t combination(NodeKind kind) {
    std::vector<OperandRef> ops;
    while (tok_.type != Token::Type::Close) {
      if (tok_.type == Token::Type::End) fail("unexpected end of input");
      ops.push_back(operand());
    }
    if (ops.empty()) fail("AND/OR needs at least one operand");
    return emit_combination(kind, std::move(ops));
  }

  OperandRef operand() {
    if (tok_.type == Token::Type::Open) {
      // Peek for NOT without consuming the expression.
      HypothesisLexer probe = lex_;
      Token next = probe.next();
      if (next.type == Token::Type::Atom && next.text == "NOT") {
        advance();
        advance();
        if (tok_.type != Token::Type::Atom) fail("NOT applies only to a concept name");
        std::uint32_t id = resolve(kb_.names().concepts, "concept");
        expect(Token::Type::Close, "')'");
        return {OperandRef::Source::Concept, true, id};
      }
    }
    Parsed p = expr();
    return {p.source, false, p.id};
  }

  OperandRef filler_ref() {
    Parsed p = expr();
    return {p.source, false, p.id};
  }

  std::pair<std::uint32_t, bool> role_ref() {
    if (tok_.type == Token::Type::Open) {
      advance();
      const std::size_t pos = tok_.pos;
      if (take_atom("INV") != "INV") fail_at("expected INV", pos);
      std::uint32_t id = resolve(kb_.names().roles, "role");
      expect(Token::Type::Close, "')'");
      return {id, true};
    }
    return {resolve(kb_.names().roles, "role"), false};
  }

  std::uint32_t cardinality_count() {
    const std::size_t pos = tok_.pos;
    const std::string s = take_atom("cardinality");
    long long v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) {
      fail_at("invalid cardinality '" + s + "'", pos);
    }
    if (v < 0) fail_at("cardinality must be non-negative, got " + s, pos);
    if (v > std::numeric_limits<std::uint32_t>::max()) fail_at("cardinality too large: " + s, pos);
    return static_cast<std::uint32_t>(v);
  }

  std::uint32_t emit_combination(NodeKind kind, std::vector<OperandRef> ops) {
    DLOperationNode n;
    n.kind = kind;
    n.first_operand = static_cast<std::uint32_t>(hyp_.operands.size());
    n.operand_count = static_cast<std::uint32_t>(ops.size());
    hyp_.operands.insert(hyp_.operands.end(), ops.begin(), ops.end());
    return emit(n);
  }

  std::uint32_t emit(DLOperationNode n) {
    const auto idx = static_cast<std::uint32_t>(hyp_.nodes.size());
    n.output_row = idx;
    hyp_.nodes.push_back(n);
    return idx;
  }

  HypothesisLexer lex_;
  const KnowledgeBase& kb_;
  Token tok_{Token::Type::End, {}, 0};
  Hypothesis hyp_;
};

}  // namespace detail

inline Hypothesis parse_hypothesis(std::string_view text, const KnowledgeBase& kb) {
  return detail::HypothesisParser(text, kb).parse();
}

// ---------------------------------------------------------------------------
// Planning.

struct EvaluationPlan {
  std::vector<std::uint32_t> order;        // node indices in execution order
  std::vector<std::uint32_t> row_of_node;  // physical results row per node
  std::uint32_t peak_rows = 0;
};

struct PlanOptions {
  bool reuse_rows = true;
};

namespace detail {

template <class Fn>
void for_each_input(const Hypothesis& hyp, const DLOperationNode& n, Fn&& fn) {
  switch (n.kind) {
    case NodeKind::Conjunction:
    case NodeKind::Disjunction:
      for (const OperandRef& op : hyp.operands_of(n)) fn(op);
      break;
    case NodeKind::ExistsRole:
    case NodeKind::ForallRole:
    case NodeKind::CardinalityRole:
      fn(n.filler);
      break;
    default:
      break;
  }
}

}  // namespace detail

// Rows are allocated greedily: a node gets the lowest free row, and a row is
// released after its last consumer has been assigned its output row, so a
// node never writes into one of its own inputs.
inline EvaluationPlan plan(const Hypothesis& hyp, PlanOptions options = {}) {
  const auto count = static_cast<std::uint32_t>(hyp.nodes.size());
  EvaluationPlan p;
  p.order.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) p.order[i] = i;
  p.row_of_node.assign(count, 0);
  if (count == 0) return p;

  if (!options.reuse_rows) {
    p.row_of_node = p.order;
    p.peak_rows = count;
    return p;
  }

  std::vector<std::uint32_t> last_use(count, 0);
  for (std::uint32_t i = 0; i < count; ++i) last_use[i] = i;
  last_use[count - 1] = count;  // the root row is never released
  for (std::uint32_t i = 0; i < count; ++i) {
    detail::for_each_input(hyp, hyp.nodes[i], [&](const OperandRef& op) {
      if (op.source == OperandRef::Source::Node) last_use[op.id] = std::max(last_use[op.id], i);
    });
  }

  std::vector<std::uint32_t> free_rows;  // kept sorted descending; back() is lowest
  for (std::uint32_t step = 0; step < count; ++step) {
    const std::uint32_t node = p.order[step];
    std::uint32_t row = 0;
    if (!free_rows.empty()) {
      row = free_rows.back();
      free_rows.pop_back();
    } else {
      row = p.peak_rows++;
    }
    p.row_of_node[node] = row;

    std::vector<std::uint32_t> released;
    detail::for_each_input(hyp, hyp.nodes[node], [&](const OperandRef& op) {
      if (op.source == OperandRef::Source::Node && last_use[op.id] == step) {
        released.push_back(p.row_of_node[op.id]);
      }
    });
    for (std::uint32_t r : released) {
      if (std::find(free_rows.begin(), free_rows.end(), r) == free_rows.end()) {
        free_rows.push_back(r);
      }
    }
    std::sort(free_rows.begin(), free_rows.end(), std::greater<>());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Execution.

// Reusable scratch memory for plan execution: results rows plus cardinality
// counters. One workspace per concurrently executing hypothesis.
class Workspace {
 public:
  void reserve(std::size_t rows, std::size_t individuals) {
    if (individuals_ != individuals || rows_.size() < rows) {
      individuals_ = individuals;
      rows_.resize(std::max(rows, rows_.size()));
      for (MembershipRow& r : rows_) r.resize(individuals);
    }
    counters_.resize(individuals);
  }

  RowSpan row(std::size_t r) { return rows_[r]; }
  std::span<std::uint32_t> counters() { return counters_; }

 private:
  std::size_t individuals_ = 0;
  std::vector<MembershipRow> rows_;
  std::vector<std::uint32_t> counters_;
};

inline RowView execute_plan_into(const EvaluationPlan& p, const Hypothesis& hyp,
                                 const KnowledgeBase& kb, const Execution& exec,
                                 Workspace& ws) {
  if (hyp.nodes.empty()) throw InvalidArgument("hypothesis has no operations");
  if (p.row_of_node.size() != hyp.nodes.size() || p.order.size() != hyp.nodes.size()) {
    throw InvalidArgument("evaluation plan does not match the hypothesis");
  }
  ws.reserve(p.peak_rows, kb.num_individuals());

  // Only conjunction/disjunction have a vector form; restrictions inside a
  // vector-strategy evaluation run multithreaded scalar.
  Execution restriction_exec = exec;
  if (exec.strategy == ExecutionStrategy::ParallelVector) {
    restriction_exec.strategy = ExecutionStrategy::ParallelScalar;
  }

  auto view_of = [&](const OperandRef& op) -> RowView {
    if (op.source == OperandRef::Source::Concept) return kb.concepts().row(ConceptId{op.id});
    return ws.row(p.row_of_node[op.id]);
  };

  std::vector<RowView> rows;
  std::vector<std::uint8_t> negated;
  for (std::uint32_t idx : p.order) {
    const DLOperationNode& n = hyp.nodes[idx];
    RowSpan out = ws.row(p.row_of_node[idx]);
    switch (n.kind) {
      case NodeKind::Conjunction:
      case NodeKind::Disjunction: {
        rows.clear();
        negated.clear();
        for (const OperandRef& op : hyp.operands_of(n)) {
          rows.push_back(view_of(op));
          negated.push_back(op.negated ? 1 : 0);
        }
        if (n.kind == NodeKind::Conjunction) {
          conjunction_into(out, kb, rows, negated, exec);
        } else {
          disjunction_into(out, kb, rows, negated, exec);
        }
        break;
      }
      case NodeKind::ExistsRole:
        exists_role_into(out, kb, RoleId{n.role}, view_of(n.filler), n.inverse, restriction_exec);
        break;
      case NodeKind::ForallRole:
        forall_role_into(out, kb, RoleId{n.role}, view_of(n.filler), n.inverse, restriction_exec);
        break;
      case NodeKind::CardinalityRole:
        cardinality_role_into(out, ws.counters(), kb, RoleId{n.role}, view_of(n.filler),
                              n.cardinality, n.count, n.inverse, restriction_exec);
        break;
      case NodeKind::ExistsNumeric:
        exists_numeric_into(out, kb, NumericRoleId{n.role}, n.comparator, n.threshold,
                            restriction_exec);
        break;
      case NodeKind::StringEqual:
        string_equal_into(out, kb, StringRoleId{n.role}, hyp.strings[n.text], restriction_exec);
        break;
      case NodeKind::StringContain:
        string_contain_into(out, kb, StringRoleId{n.role}, hyp.strings[n.text], restriction_exec);
        break;
    }
  }
  return ws.row(p.row_of_node[hyp.nodes.size() - 1]);
}

inline MembershipRow execute_plan(const EvaluationPlan& p, const Hypothesis& hyp,
                                  const KnowledgeBase& kb, const Execution& exec) {
  Workspace ws;
  RowView root = execute_plan_into(p, hyp, kb, exec, ws);
  return MembershipRow(root.begin(), root.end());
}

// ---------------------------------------------------------------------------
// Coverage.

struct CoverageResult {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;

  friend bool operator==(const CoverageResult&, const CoverageResult&) = default;
};

namespace detail {

inline constexpr std::size_t kWarpLanes = 32;

// Pairwise halving over 32 lanes, the shape of a shuffle-down warp reduction.
inline CoverageResult warp_reduce(std::span<const CoverageResult> lanes) noexcept {
  CoverageResult v[kWarpLanes]{};
  std::copy(lanes.begin(), lanes.end(), v);
  for (std::size_t offset = kWarpLanes / 2; offset > 0; offset /= 2) {
    for (std::size_t l = 0; l < offset; ++l) {
      v[l].pos += v[l + offset].pos;
      v[l].neg += v[l + offset].neg;
    }
  }
  return v[0];
}

inline CoverageResult tree_reduce_coverage(RowView row, std::span<const ExampleFlags> ex,
                                           unsigned workers) {
  const std::size_t n = row.size();
  std::vector<CoverageResult> level((n + kWarpLanes - 1) / kWarpLanes);
  parallel::for_each_index(level.size(), workers, [&](std::size_t w) {
    CoverageResult lanes[kWarpLanes]{};
    const std::size_t base = w * kWarpLanes;
    const std::size_t width = std::min(kWarpLanes, n - base);
    for (std::size_t l = 0; l < width; ++l) {
      lanes[l].pos = row[base + l] & ex[base + l].pos;
      lanes[l].neg = row[base + l] & ex[base + l].neg;
    }
    level[w] = warp_reduce(lanes);
  });
  while (level.size() > 1) {
    std::vector<CoverageResult> next((level.size() + kWarpLanes - 1) / kWarpLanes);
    for (std::size_t w = 0; w < next.size(); ++w) {
      const std::size_t base = w * kWarpLanes;
      const std::size_t width = std::min(kWarpLanes, level.size() - base);
      next[w] = warp_reduce(std::span<const CoverageResult>(level).subspan(base, width));
    }
    level = std::move(next);
  }
  return level.empty() ? CoverageResult{} : level.front();
}

}  // namespace detail

inline CoverageResult count_coverage(RowView row, const KnowledgeBase& kb, const Execution& exec) {
  detail::check_length(kb, row.size(), "result row");
  std::span<const ExampleFlags> ex = kb.examples().flags();
  const std::size_t n = row.size();

  switch (exec.strategy) {
    case ExecutionStrategy::SequentialScalar: {
      CoverageResult c;
      for (std::size_t i = 0; i < n; ++i) {
        c.pos += row[i] & ex[i].pos;
        c.neg += row[i] & ex[i].neg;
      }
      return c;
    }
    case ExecutionStrategy::ParallelScalar:
    case ExecutionStrategy::ParallelVector: {
      std::uint64_t pos = 0;
      std::uint64_t neg = 0;
      const auto count = static_cast<std::int64_t>(n);
      const unsigned w = parallel::resolve_workers(exec.workers);
#pragma omp parallel for num_threads(w) schedule(static) reduction(+ : pos, neg) if (w > 1)
      for (std::int64_t i = 0; i < count; ++i) {
        pos += row[i] & ex[i].pos;
        neg += row[i] & ex[i].neg;
      }
      return {pos, neg};
    }
    case ExecutionStrategy::EmulatedDeviceParallel:
      return detail::tree_reduce_coverage(row, ex, exec.workers);
  }
  return {};
}

// Parse, plan, execute and count for one hypothesis.
inline CoverageResult evaluate(std::string_view hypothesis_text, const KnowledgeBase& kb,
                               const Execution& exec) {
  Hypothesis hyp = parse_hypothesis(hypothesis_text, kb);
  EvaluationPlan p = plan(hyp);
  Workspace ws;
  RowView root = execute_plan_into(p, hyp, kb, exec, ws);
  return count_coverage(root, kb, exec);
}

}  // namespace dleval
