#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "coevo/error.hpp"
#include "coevo/fitness.hpp"
#include "coevo/rng.hpp"

namespace coevo {

struct Pairing {
  std::size_t attacker;
  std::size_t defender;
  friend bool operator==(const Pairing&, const Pairing&) = default;
};

/// How engagements are formed between the two populations in one half-generation.
struct CompetitionStructure {
  enum class Kind { one_vs_one, all_vs_all, tournament, spatial };
  Kind kind = Kind::all_vs_all;
  std::size_t rounds = 1;  // tournament
  std::size_t grid = 0;    // spatial: M, the grid side
  std::size_t window = 1;  // spatial: c, side of the (odd) Moore neighborhood

  static CompetitionStructure one_vs_one() { return {Kind::one_vs_one}; }
  static CompetitionStructure all_vs_all() { return {Kind::all_vs_all}; }
  static CompetitionStructure tournament(std::size_t rounds) { return {Kind::tournament, rounds}; }
  static CompetitionStructure spatial(std::size_t m, std::size_t c) { return {Kind::spatial, 1, m, c}; }

  std::string describe() const {
    switch (kind) {
      case Kind::one_vs_one: return "one-vs-one";
      case Kind::all_vs_all: return "all-vs-all";
      case Kind::tournament: return "tournament:" + std::to_string(rounds);
      case Kind::spatial: return "spatial:" + std::to_string(grid) + ":" + std::to_string(window);
    }
    return "?";
  }

  /// Throws StructureMismatch if the population sizes do not fit this structure.
  void check(std::size_t n_att, std::size_t n_def) const {
    if (n_att == 0 || n_def == 0) throw StructureMismatch("empty population");
    if (kind == Kind::tournament && rounds < 1) throw StructureMismatch("tournament needs >= 1 round");
    if (kind == Kind::spatial) {
      if (grid == 0 || n_att != grid * grid || n_def != grid * grid)
        throw StructureMismatch("spatial(" + std::to_string(grid) + "," + std::to_string(window) +
                                ") requires both populations of size " +
                                std::to_string(grid * grid));
      if (window % 2 == 0 || window > grid)
        throw StructureMismatch("spatial neighborhood side must be odd and <= grid side");
    }
  }
};

namespace detail {

// Each member of the larger side once; the smaller side is cycled through
// fresh random permutations so reuse is as even as possible.
inline std::vector<Pairing> one_vs_one(const std::vector<std::size_t>& att,
                                       const std::vector<std::size_t>& def, RngStream& rng) {
  const bool att_larger = att.size() >= def.size();
  const auto& large = att_larger ? att : def;
  const auto& small = att_larger ? def : att;

  std::vector<Pairing> out;
  out.reserve(large.size());
  std::vector<std::size_t> perm;
  for (std::size_t i = 0; i < large.size(); ++i) {
    if (i % small.size() == 0) {
      perm = small;
      for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[rng.uniform_index(k)]);
    }
    auto other = perm[i % small.size()];
    out.push_back(att_larger ? Pairing{large[i], other} : Pairing{other, large[i]});
  }
  return out;
}

}  // namespace detail

/// Pairs between the given attacker and defender ids.
///
/// For tournament structures this returns a single round (a random
/// one-vs-one draw among the participants); the caller runs the rounds and
/// narrows the participants with `tournament_survivors`.
inline std::vector<Pairing> pair(const CompetitionStructure& s, const std::vector<std::size_t>& att,
                                 const std::vector<std::size_t>& def, RngStream& rng) {
  using Kind = CompetitionStructure::Kind;
  s.check(att.size(), def.size());
  switch (s.kind) {
    case Kind::one_vs_one:
    case Kind::tournament:
      return detail::one_vs_one(att, def, rng);
    case Kind::all_vs_all: {
      std::vector<Pairing> out;
      out.reserve(att.size() * def.size());
      for (auto a : att)
        for (auto d : def) out.push_back({a, d});
      return out;
    }
    case Kind::spatial: {
      // Cell (r,c) holds attacker att[r*M+c] and defender def[r*M+c].
      const auto m = std::ptrdiff_t(s.grid);
      const auto radius = std::ptrdiff_t(s.window / 2);
      std::vector<Pairing> out;
      out.reserve(att.size() * s.window * s.window);
      for (std::ptrdiff_t r = 0; r < m; ++r)
        for (std::ptrdiff_t c = 0; c < m; ++c)
          for (std::ptrdiff_t dr = -radius; dr <= radius; ++dr)
            for (std::ptrdiff_t dc = -radius; dc <= radius; ++dc) {
              auto rr = (r + dr + m) % m;
              auto cc = (c + dc + m) % m;
              out.push_back({att[std::size_t(r * m + c)], def[std::size_t(rr * m + cc)]});
            }
      return out;
    }
  }
  return {};
}

inline std::vector<Pairing> pair(const CompetitionStructure& s, std::size_t n_att, std::size_t n_def,
                                 RngStream& rng) {
  std::vector<std::size_t> att(n_att), def(n_def);
  std::iota(att.begin(), att.end(), 0);
  std::iota(def.begin(), def.end(), 0);
  return pair(s, att, def, rng);
}

/// The better half (rounded up) of `ids` by `scores`, in ascending id order.
inline std::vector<std::size_t> tournament_survivors(const std::vector<std::size_t>& ids,
                                                     const std::vector<double>& scores,
                                                     Direction dir) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return better(scores[a], scores[b], dir); });
  order.resize((ids.size() + 1) / 2);
  std::vector<std::size_t> out;
  for (auto k : order) out.push_back(ids[k]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace coevo
