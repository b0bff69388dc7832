#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coevo/fitness.hpp"
#include "coevo/grammar.hpp"
#include "coevo/rng.hpp"

namespace coevo {

struct SelectionScheme {
  enum class Kind { tournament, truncation };
  Kind kind = Kind::tournament;
  std::size_t tournament_size = 2;
  double fraction = 0.5;

  static SelectionScheme tournament(std::size_t k) { return {Kind::tournament, k, 0.5}; }
  static SelectionScheme truncation(double f) { return {Kind::truncation, 2, f}; }

  std::string describe() const {
    return kind == Kind::tournament ? "tournament:" + std::to_string(tournament_size)
                                    : "truncation:" + std::to_string(fraction);
  }
};

/// Indices of N parents drawn with replacement. Without fitness values every
/// draw is uniform.
inline std::vector<std::size_t> select(std::size_t n, const std::vector<double>* fitness,
                                       const SelectionScheme& scheme, RngStream& rng, Direction dir) {
  std::vector<std::size_t> parents;
  parents.reserve(n);
  if (!fitness) {
    for (std::size_t i = 0; i < n; ++i) parents.push_back(rng.uniform_index(n));
    return parents;
  }
  const auto& f = *fitness;
  if (scheme.kind == SelectionScheme::Kind::tournament) {
    const auto k = std::max<std::size_t>(1, scheme.tournament_size);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = rng.uniform_index(n);
      for (std::size_t j = 1; j < k; ++j) {
        std::size_t c = rng.uniform_index(n);
        if (better(f[c], f[best], dir) || (f[c] == f[best] && c < best)) best = c;
      }
      parents.push_back(best);
    }
    return parents;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return better(f[a], f[b], dir); });
  auto keep = std::size_t(std::ceil(std::clamp(scheme.fraction, 0.0, 1.0) * double(n)));
  keep = std::clamp<std::size_t>(keep, 1, n);
  for (std::size_t i = 0; i < n; ++i) parents.push_back(order[rng.uniform_index(keep)]);
  return parents;
}

/// Point mutation of every codon with probability mu, then with probability mu
/// one insertion or deletion at a uniform position. A length change that would
/// leave [min_len, max_len] is skipped.
inline Genotype mutate(Genotype g, double mu, RngStream& rng, const GenotypeLimits& lim) {
  for (auto& c : g.codons)
    if (rng.bernoulli(mu)) c = Codon(rng.uniform_index(lim.codon_max));
  if (rng.bernoulli(mu)) {
    const bool insert = rng.bernoulli(0.5);
    if (insert) {
      auto pos = rng.uniform_index(g.codons.size() + 1);
      auto value = Codon(rng.uniform_index(lim.codon_max));
      if (g.codons.size() < lim.max_len)
        g.codons.insert(g.codons.begin() + std::ptrdiff_t(pos), value);
    } else {
      auto pos = rng.uniform_index(g.codons.size());
      if (g.codons.size() > lim.min_len) g.codons.erase(g.codons.begin() + std::ptrdiff_t(pos));
    }
  }
  return g;
}

/// One-point splice: a[0,cut_a) + b[cut_b,end) and b[0,cut_b) + a[cut_a,end).
inline std::pair<Genotype, Genotype> crossover_at(const Genotype& a, const Genotype& b,
                                                  std::size_t cut_a, std::size_t cut_b) {
  Genotype x, y;
  x.codons.assign(a.codons.begin(), a.codons.begin() + std::ptrdiff_t(cut_a));
  x.codons.insert(x.codons.end(), b.codons.begin() + std::ptrdiff_t(cut_b), b.codons.end());
  y.codons.assign(b.codons.begin(), b.codons.begin() + std::ptrdiff_t(cut_b));
  y.codons.insert(y.codons.end(), a.codons.begin() + std::ptrdiff_t(cut_a), a.codons.end());
  return {std::move(x), std::move(y)};
}

/// Variable-length one-point crossover with probability xi. Cut pairs whose
/// children leave the length bounds are resampled up to 100 times.
inline std::pair<Genotype, Genotype> crossover(const Genotype& a, const Genotype& b, double xi,
                                               RngStream& rng, const GenotypeLimits& lim) {
  if (!rng.bernoulli(xi)) return {a, b};
  const auto la = a.codons.size(), lb = b.codons.size();
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto ca = rng.uniform_index(la + 1);
    auto cb = rng.uniform_index(lb + 1);
    auto len_x = ca + (lb - cb), len_y = cb + (la - ca);
    if (len_x < lim.min_len || len_x > lim.max_len || len_y < lim.min_len || len_y > lim.max_len)
      continue;
    return crossover_at(a, b, ca, cb);
  }
  return {a, b};
}

}  // namespace coevo
