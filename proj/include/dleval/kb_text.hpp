#pragma once

// Line-oriented KB text format.
//
//   #concepts / #roles / #numeric-roles / #string-roles / #individuals
//       one name per line
//   #concept-assertions   <concept> <individual>
//   #role-assertions      <role> <subject> <object>
//   #numeric-assertions   <numeric-role> <subject> <decimal>
//   #string-assertions    <string-role> <subject> "<value>"
//   #examples             + <individual>   |   - <individual>
//
// Lines starting with ';' are comments. Declarations may appear anywhere in
// the document; ids follow the order in which declarations appear.

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dleval/error.hpp"
#include "dleval/kb.hpp"

namespace dleval {

namespace text {

inline bool is_name(std::string_view s) noexcept {
  if (s.empty()) return false;
  auto head = [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
  };
  auto tail = [&](char c) {
    return head(c) || (c >= '0' && c <= '9') || c == '.' || c == '-';
  };
  if (!head(s.front())) return false;
  for (char c : s.substr(1)) {
    if (!tail(c)) return false;
  }
  return true;
}

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Quotes and escapes a value so parse_quoted() returns it unchanged.
inline std::string quote(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back('"');
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

struct Quoted {
  std::string value;
  std::size_t consumed;  // bytes of input including both quotes
};

// Parses a double-quoted string at the start of `s`. Returns nullopt-like
// failure through `error` (empty on success).
inline Quoted parse_quoted(std::string_view s, std::string& error) {
  Quoted q{{}, 0};
  if (s.empty() || s.front() != '"') {
    error = "expected '\"'";
    return q;
  }
  std::size_t i = 1;
  while (i < s.size()) {
    char c = s[i];
    if (c == '"') {
      q.consumed = i + 1;
      return q;
    }
    if (c == '\\') {
      if (i + 1 >= s.size()) break;
      switch (s[i + 1]) {
        case '"': q.value.push_back('"'); break;
        case '\\': q.value.push_back('\\'); break;
        case 'n': q.value.push_back('\n'); break;
        case 't': q.value.push_back('\t'); break;
        case 'r': q.value.push_back('\r'); break;
        default:
          error = std::string("unknown escape '\\") + s[i + 1] + "'";
          return q;
      }
      i += 2;
      continue;
    }
    q.value.push_back(c);
    ++i;
  }
  error = "unterminated string";
  return q;
}

inline std::string format_float(float v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline bool parse_float(std::string_view s, float& out) noexcept {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && end == s.data() + s.size();
}

}  // namespace text

namespace detail {

enum class Section {
  None,
  Concepts,
  Roles,
  NumericRoles,
  StringRoles,
  Individuals,
  ConceptAssertions,
  RoleAssertions,
  NumericAssertions,
  StringAssertions,
  Examples,
};

inline Section section_from_header(std::string_view h) {
  if (h == "#concepts") return Section::Concepts;
  if (h == "#roles") return Section::Roles;
  if (h == "#numeric-roles") return Section::NumericRoles;
  if (h == "#string-roles") return Section::StringRoles;
  if (h == "#individuals") return Section::Individuals;
  if (h == "#concept-assertions") return Section::ConceptAssertions;
  if (h == "#role-assertions") return Section::RoleAssertions;
  if (h == "#numeric-assertions") return Section::NumericAssertions;
  if (h == "#string-assertions") return Section::StringAssertions;
  if (h == "#examples") return Section::Examples;
  return Section::None;
}

inline bool is_declaration(Section s) {
  return s == Section::Concepts || s == Section::Roles || s == Section::NumericRoles ||
         s == Section::StringRoles || s == Section::Individuals;
}

// Splits off the next whitespace-delimited field.
inline std::string_view next_field(std::string_view& rest) {
  rest = text::trim(rest);
  std::size_t end = 0;
  while (end < rest.size() && !text::is_space(rest[end])) ++end;
  std::string_view field = rest.substr(0, end);
  rest.remove_prefix(end);
  return field;
}

struct Line {
  std::size_t number;
  Section section;
  std::string_view body;
};

class KbReader {
 public:
  explicit KbReader(std::string_view document) {
    std::size_t number = 0;
    Section section = Section::None;
    std::size_t pos = 0;
    while (pos <= document.size()) {
      std::size_t nl = document.find('\n', pos);
      if (nl == std::string_view::npos) nl = document.size();
      std::string_view raw = document.substr(pos, nl - pos);
      pos = nl + 1;
      ++number;

      std::string_view line = text::trim(raw);
      if (line.empty() || line.front() == ';') continue;
      if (line.front() == '#') {
        section = section_from_header(line);
        if (section == Section::None) fail(number, "unknown section header '" + std::string(line) + "'");
        continue;
      }
      if (section == Section::None) fail(number, "content before any section header");
      lines_.push_back({number, section, line});
    }
  }

  KnowledgeBase read() && {
    // Declarations first so assertions may precede them in the document.
    for (const Line& l : lines_) {
      if (is_declaration(l.section)) declare(l);
    }
    for (const Line& l : lines_) {
      if (!is_declaration(l.section)) assert_line(l);
    }
    return std::move(builder_).build();
  }

 private:
  [[noreturn]] static void fail(std::size_t line, const std::string& msg) {
    throw ParseError("line " + std::to_string(line) + ": " + msg, line);
  }

  void declare(const Line& l) {
    std::string_view rest = l.body;
    std::string_view name = next_field(rest);
    if (!text::trim(rest).empty()) fail(l.number, "expected a single name");
    if (!text::is_name(name)) fail(l.number, "invalid name '" + std::string(name) + "'");
    try {
      switch (l.section) {
        case Section::Concepts: builder_.add_concept(std::string(name)); break;
        case Section::Roles: builder_.add_role(std::string(name)); break;
        case Section::NumericRoles: builder_.add_numeric_role(std::string(name)); break;
        case Section::StringRoles: builder_.add_string_role(std::string(name)); break;
        case Section::Individuals: builder_.add_individual(std::string(name)); break;
        default: break;
      }
    } catch (const InvalidArgument& e) {
      fail(l.number, e.what());
    }
  }

  std::uint32_t lookup(const NameTable& table, std::string_view name, const char* what,
                       std::size_t line) const {
    if (name.empty()) fail(line, std::string("missing ") + what);
    auto id = table.find(name);
    if (!id) fail(line, std::string("undeclared ") + what + " '" + std::string(name) + "'");
    return *id;
  }

  void expect_end(std::string_view rest, std::size_t line) const {
    if (!text::trim(rest).empty()) {
      fail(line, "unexpected trailing text '" + std::string(text::trim(rest)) + "'");
    }
  }

  void assert_line(const Line& l) {
    const NameMaps& names = builder_.names();
    std::string_view rest = l.body;
    try {
      switch (l.section) {
        case Section::ConceptAssertions: {
          auto c = lookup(names.concepts, next_field(rest), "concept", l.number);
          auto i = lookup(names.individuals, next_field(rest), "individual", l.number);
          expect_end(rest, l.number);
          builder_.assert_concept(ConceptId{c}, i);
          break;
        }
        case Section::RoleAssertions: {
          auto r = lookup(names.roles, next_field(rest), "role", l.number);
          auto s = lookup(names.individuals, next_field(rest), "individual", l.number);
          auto o = lookup(names.individuals, next_field(rest), "individual", l.number);
          expect_end(rest, l.number);
          builder_.assert_role(RoleId{r}, s, o);
          break;
        }
        case Section::NumericAssertions: {
          auto r = lookup(names.numeric_roles, next_field(rest), "numeric role", l.number);
          auto s = lookup(names.individuals, next_field(rest), "individual", l.number);
          std::string_view num = next_field(rest);
          float v = 0;
          if (!text::parse_float(num, v)) fail(l.number, "invalid decimal '" + std::string(num) + "'");
          expect_end(rest, l.number);
          builder_.assert_numeric(NumericRoleId{r}, s, v);
          break;
        }
        case Section::StringAssertions: {
          auto r = lookup(names.string_roles, next_field(rest), "string role", l.number);
          auto s = lookup(names.individuals, next_field(rest), "individual", l.number);
          rest = text::trim(rest);
          std::string error;
          text::Quoted q = text::parse_quoted(rest, error);
          if (!error.empty()) fail(l.number, error);
          expect_end(rest.substr(q.consumed), l.number);
          builder_.assert_string(StringRoleId{r}, s, q.value);
          break;
        }
        case Section::Examples: {
          std::string_view sign = next_field(rest);
          if (sign != "+" && sign != "-") fail(l.number, "example must start with '+' or '-'");
          auto i = lookup(names.individuals, next_field(rest), "individual", l.number);
          expect_end(rest, l.number);
          builder_.mark_example(i, sign == "+" ? ExampleLabel::Positive : ExampleLabel::Negative);
          break;
        }
        default: break;
      }
    } catch (const InvalidArgument& e) {
      fail(l.number, e.what());
    }
  }

  std::vector<Line> lines_;
  KnowledgeBaseBuilder builder_;
};

}  // namespace detail

inline KnowledgeBase load_kb(std::string_view document) {
  return detail::KbReader(document).read();
}

inline KnowledgeBase load_kb_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open KB file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_kb(ss.str());
}

inline void write_kb(std::ostream& out, const KnowledgeBase& kb) {
  const NameMaps& names = kb.names();
  auto declarations = [&](const char* header, const NameTable& table) {
    out << header << '\n';
    for (const std::string& n : table.names()) out << n << '\n';
  };
  declarations("#concepts", names.concepts);
  declarations("#roles", names.roles);
  declarations("#numeric-roles", names.numeric_roles);
  declarations("#string-roles", names.string_roles);
  declarations("#individuals", names.individuals);

  const std::size_t n = kb.num_individuals();
  out << "#concept-assertions\n";
  for (std::uint32_t c = 0; c < kb.concepts().rows(); ++c) {
    auto row = kb.concepts().row(ConceptId{c});
    for (std::size_t i = 0; i < n; ++i) {
      if (row[i]) out << names.concepts.name(c) << ' ' << names.individuals.name(static_cast<IndividualId>(i)) << '\n';
    }
  }

  out << "#role-assertions\n";
  for (std::uint32_t r = 0; r < kb.roles().role_count(); ++r) {
    for (const RoleAssertion& a : kb.roles().segment_view(r)) {
      out << names.roles.name(r) << ' ' << names.individuals.name(a.subj) << ' '
          << names.individuals.name(a.obj) << '\n';
    }
  }

  out << "#numeric-assertions\n";
  for (std::uint32_t r = 0; r < kb.numeric_roles().role_count(); ++r) {
    for (const NumericAssertion& a : kb.numeric_roles().segment_view(r)) {
      out << names.numeric_roles.name(r) << ' ' << names.individuals.name(a.subj) << ' '
          << text::format_float(a.val) << '\n';
    }
  }

  out << "#string-assertions\n";
  for (std::uint32_t r = 0; r < kb.string_roles().role_count(); ++r) {
    for (const StringAssertion& a : kb.string_roles().segment_view(r)) {
      out << names.string_roles.name(r) << ' ' << names.individuals.name(a.subj) << ' '
          << text::quote(a.val) << '\n';
    }
  }

  out << "#examples\n";
  auto flags = kb.examples().flags();
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i].pos) out << "+ " << names.individuals.name(static_cast<IndividualId>(i)) << '\n';
    if (flags[i].neg) out << "- " << names.individuals.name(static_cast<IndividualId>(i)) << '\n';
  }
}

inline std::string write_kb(const KnowledgeBase& kb) {
  std::ostringstream out;
  write_kb(out, kb);
  return out.str();
}

}  // namespace dleval
