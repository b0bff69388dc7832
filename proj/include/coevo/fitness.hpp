#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "coevo/error.hpp"

namespace coevo {

enum class Role { attacker, defender };

inline std::string_view to_string(Role r) { return r == Role::attacker ? "attacker" : "defender"; }

/// Optimization direction of one objective.
enum class Direction { minimize, maximize };

inline Direction opposite(Direction d) {
  return d == Direction::minimize ? Direction::maximize : Direction::minimize;
}

/// True iff a is strictly better than b under d.
inline bool better(double a, double b, Direction d) { return d == Direction::minimize ? a < b : a > b; }

/// Worst representable fitness under d; assigned to invalid individuals.
inline double sentinel(Direction d) {
  return d == Direction::minimize ? std::numeric_limits<double>::max()
                                  : std::numeric_limits<double>::lowest();
}

/// Index of the best value; ties go to the lowest index.
inline std::size_t best_index(const std::vector<double>& v, Direction d) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (better(v[i], v[best], d)) best = i;
  return best;
}

/// Index of the worst value; ties go to the lowest index.
inline std::size_t worst_index(const std::vector<double>& v, Direction d) {
  std::size_t worst = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (better(v[worst], v[i], d)) worst = i;
  return worst;
}

/// One attack-versus-defense result as reported by an environment.
struct EngagementOutcome {
  std::size_t attacker_id = 0;
  std::size_t defender_id = 0;
  std::size_t generation = 0;
  double attacker_score = 0.0;
  double defender_score = 0.0;
  std::map<std::string, double> costs;
  std::map<std::string, double> telemetry;
  std::map<std::string, std::vector<double>> series;
};

enum class Aggregation { mean, max, min, median };

inline std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::max: return "max";
    case Aggregation::min: return "min";
    case Aggregation::median: return "median";
  }
  return "?";
}

inline double aggregate(std::vector<double> values, Aggregation how) {
  if (values.empty()) throw EmptyInput("aggregate of no values");
  switch (how) {
    case Aggregation::mean:
      return std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
    case Aggregation::max:
      return *std::max_element(values.begin(), values.end());
    case Aggregation::min:
      return *std::min_element(values.begin(), values.end());
    case Aggregation::median: {
      std::sort(values.begin(), values.end());
      auto n = values.size();
      return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    }
  }
  return 0.0;
}

/// Scalar an individual of `role` receives from one engagement. A positive
/// `cost_weight` folds the role's secondary cost into it against its direction.
inline double engagement_value(const EngagementOutcome& o, Role role, Direction dir,
                               double cost_weight) {
  const bool att = role == Role::attacker;
  double v = att ? o.attacker_score : o.defender_score;
  if (cost_weight > 0.0) {
    auto it = o.costs.find(att ? "attacker_cost" : "defender_cost");
    if (it != o.costs.end()) v += (dir == Direction::minimize ? 1.0 : -1.0) * cost_weight * it->second;
  }
  return v;
}

/// Aggregate each individual's engagement values. `ids` lists the individuals
/// that must have at least one outcome; the result is keyed by id.
inline std::map<std::size_t, double> assign_fitness(const std::vector<EngagementOutcome>& outcomes,
                                                    Aggregation how, Role role,
                                                    const std::vector<std::size_t>& ids,
                                                    Direction dir = Direction::maximize,
                                                    double cost_weight = 0.0) {
  std::map<std::size_t, std::vector<double>> per;
  for (const auto& o : outcomes) {
    auto id = role == Role::attacker ? o.attacker_id : o.defender_id;
    per[id].push_back(engagement_value(o, role, dir, cost_weight));
  }
  std::map<std::size_t, double> out;
  for (auto id : ids) {
    auto it = per.find(id);
    if (it == per.end())
      throw MissingOutcomes(std::string(to_string(role)) + " " + std::to_string(id) +
                            " has no engagements");
    out[id] = aggregate(std::move(it->second), how);
  }
  return out;
}

/// True iff a dominates b: no worse everywhere, strictly better somewhere.
inline bool dominates(const std::vector<double>& a, const std::vector<double>& b,
                      const std::vector<Direction>& dirs) {
  bool strictly = false;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    if (better(b[k], a[k], dirs[k])) return false;
    if (better(a[k], b[k], dirs[k])) strictly = true;
  }
  return strictly;
}

/// Indices of nondominated points, ascending. Duplicates are all kept.
///
/// Points are visited in lexicographic best-first order, so any dominator of a
/// point is visited before it; a point only needs checking against the front
/// built so far.
inline std::vector<std::size_t> pareto_front(const std::vector<std::vector<double>>& points,
                                             const std::vector<Direction>& dirs) {
  for (const auto& p : points)
    if (p.size() != dirs.size())
      throw DimensionMismatch("point has " + std::to_string(p.size()) + " coordinates, expected " +
                              std::to_string(dirs.size()));

  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      if (better(points[a][k], points[b][k], dirs[k])) return true;
      if (better(points[b][k], points[a][k], dirs[k])) return false;
    }
    return false;
  });

  std::vector<std::size_t> front;
  for (auto i : order) {
    bool dominated = std::any_of(front.begin(), front.end(),
                                 [&](std::size_t f) { return dominates(points[f], points[i], dirs); });
    if (!dominated) front.push_back(i);
  }
  std::sort(front.begin(), front.end());
  return front;
}

inline double variance(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double m = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size());
}

}  // namespace coevo
