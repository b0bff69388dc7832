#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "coevo/fitness.hpp"
#include "coevo/grammar.hpp"

namespace coevo {

struct ArchiveEntry {
  Genotype genotype;
  std::string sentence;
  Role role = Role::attacker;
  std::size_t generation = 0;
  double fitness = 0.0;
  double primary = 0.0;  // aggregated primary score, before cost folding
  double cost = 0.0;     // aggregated secondary cost
};

/// Memory of past champions. Oldest entries are evicted first when full.
class Archive {
 public:
  enum class Admission { best_of_generation, pareto };

  Archive() = default;
  Archive(std::size_t capacity, Admission rule, Direction primary_dir)
      : capacity_(capacity), rule_(rule), primary_dir_(primary_dir) {}

  std::size_t capacity() const noexcept { return capacity_; }
  Admission rule() const noexcept { return rule_; }
  const std::vector<ArchiveEntry>& entries() const noexcept { return entries_; }

  /// Objective vector used for Pareto admission: primary score in the role's
  /// direction, secondary cost minimized.
  std::vector<double> objectives(const ArchiveEntry& e) const { return {e.primary, e.cost}; }
  std::vector<Direction> directions() const { return {primary_dir_, Direction::minimize}; }

  void admit(ArchiveEntry e) {
    if (capacity_ == 0) return;
    if (rule_ == Admission::pareto) {
      const auto dirs = directions();
      const auto cand = objectives(e);
      for (const auto& x : entries_)
        if (dominates(objectives(x), cand, dirs)) return;
      std::erase_if(entries_, [&](const ArchiveEntry& x) { return dominates(cand, objectives(x), dirs); });
    }
    entries_.push_back(std::move(e));
    if (entries_.size() > capacity_) entries_.erase(entries_.begin());
  }

 private:
  std::size_t capacity_ = 0;
  Admission rule_ = Admission::best_of_generation;
  Direction primary_dir_ = Direction::maximize;
  std::vector<ArchiveEntry> entries_;
};

}  // namespace coevo
