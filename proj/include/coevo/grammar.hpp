#pragma once

// BNF grammars and grammatical-evolution genotype mapping.
//
// File format (UTF-8):
//   <name> ::= alt | alt ...     one rule per logical line
//   a line ending in '|' continues on the next non-blank line
//   '#' starts a comment that runs to end of line (outside quotes)
//   terminals are bare whitespace-separated tokens or "quoted"/'quoted' strings
//   "" is the empty sequence
// The first rule's left-hand side is the start symbol.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "coevo/error.hpp"
#include "coevo/rng.hpp"

namespace coevo {

struct Symbol {
  enum class Kind : std::uint8_t { terminal, nonterminal };
  Kind kind;
  std::uint32_t index;

  bool is_nonterminal() const noexcept { return kind == Kind::nonterminal; }
  friend bool operator==(const Symbol&, const Symbol&) = default;
};

using Alternative = std::vector<Symbol>;

class Grammar {
 public:
  std::uint32_t start() const noexcept { return 0; }
  std::size_t nonterminal_count() const noexcept { return nonterminals_.size(); }
  std::size_t terminal_count() const noexcept { return terminals_.size(); }

  const std::string& nonterminal(std::uint32_t i) const { return nonterminals_.at(i); }
  const std::string& terminal(std::uint32_t i) const { return terminals_.at(i); }
  const std::vector<Alternative>& alternatives(std::uint32_t nt) const {
    return productions_.at(nt);
  }

  std::optional<std::uint32_t> find_nonterminal(std::string_view name) const {
    auto it = nt_index_.find(std::string(name));
    if (it == nt_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::uint32_t> find_terminal(std::string_view name) const {
    auto it = t_index_.find(std::string(name));
    if (it == t_index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name_of(const Symbol& s) const {
    return s.is_nonterminal() ? nonterminal(s.index) : terminal(s.index);
  }

 private:
  friend Grammar parse_bnf(std::string_view);

  std::uint32_t intern_nonterminal(const std::string& name) {
    auto [it, inserted] = nt_index_.try_emplace(name, std::uint32_t(nonterminals_.size()));
    if (inserted) {
      nonterminals_.push_back(name);
      productions_.emplace_back();
    }
    return it->second;
  }
  std::uint32_t intern_terminal(const std::string& tok) {
    auto [it, inserted] = t_index_.try_emplace(tok, std::uint32_t(terminals_.size()));
    if (inserted) terminals_.push_back(tok);
    return it->second;
  }

  std::vector<std::string> nonterminals_;
  std::vector<std::string> terminals_;
  std::vector<std::vector<Alternative>> productions_;
  std::unordered_map<std::string, std::uint32_t> nt_index_;
  std::unordered_map<std::string, std::uint32_t> t_index_;
};

namespace detail {

enum class TokKind { nonterminal, terminal, empty, bar, defines };

struct BnfToken {
  TokKind kind;
  std::string text;
  std::size_t line;
};

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

// Tokenize one physical line; stops at '#'.
inline void tokenize_line(std::string_view line, std::size_t lineno, std::vector<BnfToken>& out) {
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (is_space(c)) { ++i; continue; }
    if (c == '#') break;
    if (c == '|') { out.push_back({TokKind::bar, "|", lineno}); ++i; continue; }
    if (line.substr(i, 3) == "::=") { out.push_back({TokKind::defines, "::=", lineno}); i += 3; continue; }
    if (c == '"' || c == '\'') {
      auto close = line.find(c, i + 1);
      if (close == std::string_view::npos) throw GrammarSyntaxError(lineno, "unterminated quoted terminal");
      std::string text(line.substr(i + 1, close - i - 1));
      out.push_back({text.empty() ? TokKind::empty : TokKind::terminal, std::move(text), lineno});
      i = close + 1;
      continue;
    }
    if (c == '<') {
      auto close = line.find('>', i + 1);
      if (close == std::string_view::npos || close == i + 1)
        throw GrammarSyntaxError(lineno, "malformed nonterminal");
      auto name = line.substr(i + 1, close - i - 1);
      for (char n : name)
        if (is_space(n) || n == '<') throw GrammarSyntaxError(lineno, "malformed nonterminal");
      out.push_back({TokKind::nonterminal, std::string(name), lineno});
      i = close + 1;
      continue;
    }
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j]) && line[j] != '|' && line[j] != '"' &&
           line[j] != '\'' && line[j] != '#' && line.substr(j, 3) != "::=")
      ++j;
    out.push_back({TokKind::terminal, std::string(line.substr(i, j - i)), lineno});
    i = j;
  }
}

}  // namespace detail

/// Parse BNF source text. Throws GrammarSyntaxError, DuplicateRule or UndefinedNonterminal.
inline Grammar parse_bnf(std::string_view text) {
  using detail::BnfToken;
  using detail::TokKind;

  // Group physical lines into logical rules.
  std::vector<std::vector<BnfToken>> rules;
  {
    std::size_t lineno = 0;
    std::size_t pos = 0;
    bool continuing = false;
    while (pos <= text.size()) {
      auto nl = text.find('\n', pos);
      auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      ++lineno;
      std::vector<BnfToken> toks;
      detail::tokenize_line(line, lineno, toks);
      if (!toks.empty()) {
        if (continuing) {
          auto& cur = rules.back();
          cur.insert(cur.end(), toks.begin(), toks.end());
        } else {
          rules.push_back(std::move(toks));
        }
        continuing = rules.back().back().kind == TokKind::bar;
      }
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    if (continuing) throw GrammarSyntaxError(lineno, "rule ends with '|' at end of input");
  }
  if (rules.empty()) throw GrammarSyntaxError(0, "no rules");

  Grammar g;
  std::vector<std::pair<std::string, std::size_t>> references;

  // Intern left-hand sides first so the start symbol gets index 0 and rule order is file order.
  for (const auto& r : rules) {
    if (r.size() < 2 || r[0].kind != TokKind::nonterminal || r[1].kind != TokKind::defines)
      throw GrammarSyntaxError(r[0].line, "expected '<name> ::= ...'");
    auto before = g.nonterminal_count();
    auto idx = g.intern_nonterminal(r[0].text);
    if (idx < before) throw DuplicateRule(r[0].line, r[0].text);
  }

  for (const auto& r : rules) {
    auto lhs = *g.find_nonterminal(r[0].text);
    std::vector<Alternative> alts(1);
    bool alt_has_content = false;
    std::size_t last_line = r[1].line;
    for (std::size_t i = 2; i < r.size(); ++i) {
      const auto& t = r[i];
      last_line = t.line;
      switch (t.kind) {
        case TokKind::defines:
          throw GrammarSyntaxError(t.line, "unexpected '::='");
        case TokKind::bar:
          if (!alt_has_content) throw GrammarSyntaxError(t.line, "empty alternative (write \"\" for the empty string)");
          alts.emplace_back();
          alt_has_content = false;
          break;
        case TokKind::empty:
          alt_has_content = true;
          break;
        case TokKind::terminal:
          alts.back().push_back({Symbol::Kind::terminal, g.intern_terminal(t.text)});
          alt_has_content = true;
          break;
        case TokKind::nonterminal: {
          auto before = g.nonterminal_count();
          auto idx = g.intern_nonterminal(t.text);
          if (idx >= before) references.emplace_back(t.text, t.line);
          alts.back().push_back({Symbol::Kind::nonterminal, idx});
          alt_has_content = true;
          break;
        }
      }
    }
    if (!alt_has_content) throw GrammarSyntaxError(last_line, "empty alternative (write \"\" for the empty string)");
    g.productions_[lhs] = std::move(alts);
  }

  if (!references.empty()) throw UndefinedNonterminal(references.front().first);
  return g;
}

/// Read and parse a grammar file; error messages are prefixed with the path.
inline Grammar load_bnf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open grammar file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_bnf(ss.str());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Genotypes and mapping

using Codon = std::uint32_t;

struct Genotype {
  std::vector<Codon> codons;
  friend bool operator==(const Genotype&, const Genotype&) = default;
};

struct GenotypeLimits {
  std::size_t min_len = 1;
  std::size_t max_len = 64;
  std::uint64_t codon_max = 1u << 16;
};

enum class CodonPolicy { consume_always, consume_on_choice };

struct MappingConfig {
  std::size_t max_wraps = 2;
  CodonPolicy policy = CodonPolicy::consume_on_choice;
  std::size_t max_derivation_steps = 10'000;
};

using Sentence = std::vector<std::string>;

inline std::string join(const Sentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

struct Strategy {
  Sentence sentence;
  Genotype genotype;
  std::size_t codons_used = 0;
  std::size_t wraps_used = 0;

  std::string text() const { return join(sentence); }
};

struct MappingFailure {
  std::string reason;
  std::size_t codons_used = 0;
  std::size_t expansions = 0;
};

using MapResult = std::variant<Strategy, MappingFailure>;

/// Leftmost derivation driven by the codon sequence (mod rule, wrapping).
/// Pure function of its inputs.
inline MapResult map_genotype(const Genotype& genotype, const Grammar& grammar,
                              const MappingConfig& cfg = {}) {
  if (genotype.codons.empty()) return MappingFailure{"empty genotype", 0, 0};

  Strategy out;
  out.genotype = genotype;
  std::size_t cursor = 0;
  std::size_t expansions = 0;

  // Stack top is the leftmost unexpanded symbol.
  std::vector<Symbol> stack{{Symbol::Kind::nonterminal, grammar.start()}};
  while (!stack.empty()) {
    Symbol s = stack.back();
    stack.pop_back();
    if (!s.is_nonterminal()) {
      out.sentence.push_back(grammar.terminal(s.index));
      continue;
    }
    if (expansions == cfg.max_derivation_steps)
      return MappingFailure{"derivation step limit reached", out.codons_used, expansions};
    ++expansions;

    const auto& alts = grammar.alternatives(s.index);
    std::size_t choice = 0;
    if (alts.size() > 1 || cfg.policy == CodonPolicy::consume_always) {
      if (cursor == genotype.codons.size()) {
        if (out.wraps_used == cfg.max_wraps)
          return MappingFailure{"codons exhausted after wrapping", out.codons_used, expansions};
        ++out.wraps_used;
        cursor = 0;
      }
      choice = genotype.codons[cursor++] % alts.size();
      ++out.codons_used;
    }
    const auto& alt = alts[choice];
    for (auto it = alt.rbegin(); it != alt.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

inline Genotype random_genotype(RngStream& rng, std::size_t min_len, std::size_t max_len,
                                std::uint64_t codon_max) {
  Genotype g;
  auto len = rng.uniform_int(min_len, max_len);
  g.codons.reserve(len);
  for (std::uint64_t i = 0; i < len; ++i) g.codons.push_back(Codon(rng.uniform_index(codon_max)));
  return g;
}

inline Genotype random_genotype(RngStream& rng, const GenotypeLimits& lim) {
  return random_genotype(rng, lim.min_len, lim.max_len, lim.codon_max);
}

}  // namespace coevo
