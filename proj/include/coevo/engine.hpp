#pragma once

// Alternating two-population competitive coevolution.
//
// Each generation evolves the attackers against the frozen defenders, then the
// defenders against the just-updated attackers. A half-step is
//   select -> mutate -> crossover -> map -> pair -> engage -> assign fitness
// followed by elitist replacement: the best member of the previous population
// is re-evaluated against the frozen opponents and replaces the worst newcomer
// if it is strictly better.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "coevo/archive.hpp"
#include "coevo/competition.hpp"
#include "coevo/environment.hpp"
#include "coevo/error.hpp"
#include "coevo/fitness.hpp"
#include "coevo/grammar.hpp"
#include "coevo/rng.hpp"
#include "coevo/variation.hpp"

namespace coevo {

enum class SolutionConcept { meu, best_worst, pareto };

inline std::string_view to_string(SolutionConcept c) {
  switch (c) {
    case SolutionConcept::meu: return "meu";
    case SolutionConcept::best_worst: return "best-worst";
    case SolutionConcept::pareto: return "pareto";
  }
  return "?";
}

struct EvolutionConfig {
  std::size_t generations = 10;
  std::size_t attackers = 10;
  std::size_t defenders = 10;
  double mutation = 0.1;
  double crossover = 0.8;
  SelectionScheme selection = SelectionScheme::tournament(2);
  CompetitionStructure structure = CompetitionStructure::all_vs_all();
  Aggregation aggregation = Aggregation::mean;
  SolutionConcept solution = SolutionConcept::meu;
  std::size_t archive_capacity = 10;
  Archive::Admission archive_admission = Archive::Admission::best_of_generation;
  std::uint64_t seed = 1;
  GenotypeLimits genotype{4, 40, 1u << 16};
  MappingConfig mapping{};
  double secondary_weight = 0.2;
  std::size_t threads = 1;

  void validate() const {
    if (generations < 1) throw InvalidConfig("generations must be >= 1");
    if (attackers < 1 || defenders < 1) throw InvalidConfig("population sizes must be >= 1");
    if (!(mutation >= 0.0 && mutation <= 1.0)) throw InvalidConfig("mutation must be in [0,1]");
    if (!(crossover >= 0.0 && crossover <= 1.0)) throw InvalidConfig("crossover must be in [0,1]");
    if (genotype.min_len < 1 || genotype.min_len > genotype.max_len)
      throw InvalidConfig("genotype lengths must satisfy 1 <= min <= max");
    if (genotype.codon_max < 1 || genotype.codon_max > (std::uint64_t(1) << 32))
      throw InvalidConfig("codon_max must be in [1, 2^32]");
    if (mapping.max_derivation_steps < 1) throw InvalidConfig("max_derivation_steps must be >= 1");
    if (selection.kind == SelectionScheme::Kind::tournament && selection.tournament_size < 1)
      throw InvalidConfig("tournament size must be >= 1");
    if (selection.kind == SelectionScheme::Kind::truncation &&
        !(selection.fraction > 0.0 && selection.fraction <= 1.0))
      throw InvalidConfig("truncation fraction must be in (0,1]");
    if (secondary_weight < 0.0) throw InvalidConfig("secondary_weight must be >= 0");
    structure.check(attackers, defenders);
  }
};

struct EngagementRecord {
  std::size_t generation = 0;
  std::string phase;
  Genotype attacker_genotype;
  Genotype defender_genotype;
  std::string attacker_sentence;
  std::string defender_sentence;
  EngagementOutcome outcome;
};

struct Champion {
  std::size_t index = 0;
  Genotype genotype;
  std::string sentence;
  double fitness = 0.0;
  double primary = 0.0;
  double cost = 0.0;
};

struct Incumbent {
  std::size_t index = 0;  // position in the previous population
  Genotype genotype;
  std::string sentence;
  double fitness = 0.0;   // re-evaluated against the frozen opponents
  bool kept = false;
  std::size_t replaced = 0;  // newcomer slot it took, when kept
};

/// Summary of one half-generation.
struct HalfStep {
  std::size_t generation = 0;
  Role role = Role::attacker;
  std::vector<Genotype> population;   // after replacement
  std::vector<std::string> sentences; // empty string for invalid members
  std::vector<bool> valid;
  std::vector<double> fitness;
  std::size_t best_index = 0;
  double best_fitness = 0.0;
  double best_primary = 0.0;
  double best_cost = 0.0;
  double mean_fitness = 0.0;
  double variance = 0.0;  // over valid members; disengagement monitor
  std::size_t invalid = 0;
  std::size_t engagements = 0;
  std::optional<Incumbent> incumbent;
};

struct RunRecord {
  std::string run_id;
  EvolutionConfig config;
  Direction attacker_direction = Direction::minimize;
  std::vector<Genotype> initial_attackers;
  std::vector<Genotype> initial_defenders;
  std::vector<EngagementRecord> engagements;
  std::vector<HalfStep> steps;
  Champion best_attacker;
  Champion best_defender;
  std::vector<std::size_t> reported_attackers;  // under config.solution
  std::vector<std::size_t> reported_defenders;
  Archive attacker_archive;
  Archive defender_archive;

  Direction direction(Role r) const {
    return r == Role::attacker ? attacker_direction : Direction::maximize;
  }
};

namespace detail {

enum : std::uint64_t { tag_init = 1, tag_select, tag_mutate, tag_crossover, tag_pair };

inline std::uint64_t role_tag(Role r) { return r == Role::attacker ? 11 : 23; }

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < std::min(threads, n); ++k)
      pool.emplace_back([&] {
        try {
          for (std::size_t i; (i = next++) < n;) f(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

/// One population together with its phenotypes and latest evaluation.
template <class T>
struct Side {
  std::vector<Genotype> genotypes;
  std::vector<std::string> texts;
  std::vector<std::optional<T>> payload;
  bool evaluated = false;
  std::vector<double> fitness, primary, cost;
  std::vector<std::vector<double>> values;

  std::size_t size() const { return genotypes.size(); }
  bool valid(std::size_t i) const { return payload[i].has_value(); }
  std::vector<std::size_t> valid_ids() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < size(); ++i)
      if (valid(i)) ids.push_back(i);
    return ids;
  }
};

struct Scores {
  std::vector<double> fitness, primary, cost;
  std::vector<std::vector<double>> values;
};

inline Scores score_outcomes(const std::vector<EngagementOutcome>& outcomes, Role role, std::size_t n,
                             Direction dir, const EvolutionConfig& cfg) {
  std::vector<std::vector<double>> folded(n), raw(n), costs(n);
  const char* cost_key = role == Role::attacker ? "attacker_cost" : "defender_cost";
  for (const auto& o : outcomes) {
    auto id = role == Role::attacker ? o.attacker_id : o.defender_id;
    folded[id].push_back(engagement_value(o, role, dir, cfg.secondary_weight));
    raw[id].push_back(role == Role::attacker ? o.attacker_score : o.defender_score);
    auto it = o.costs.find(cost_key);
    costs[id].push_back(it == o.costs.end() ? 0.0 : it->second);
  }
  Scores s;
  s.fitness.assign(n, sentinel(dir));
  s.primary.assign(n, sentinel(dir));
  s.cost.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (folded[i].empty()) continue;
    s.fitness[i] = aggregate(folded[i], cfg.aggregation);
    s.primary[i] = aggregate(raw[i], cfg.aggregation);
    s.cost[i] = aggregate(costs[i], cfg.aggregation);
  }
  s.values = std::move(folded);
  return s;
}

}  // namespace detail

template <Environment Env>
class AlternatingRun {
 public:
  using Attack = typename Env::Attack;
  using Defense = typename Env::Defense;

  AlternatingRun(EvolutionConfig cfg, const Grammar& attack_grammar, const Grammar& defense_grammar,
                 const Env& env, std::string run_id = {})
      : cfg_(std::move(cfg)), ga_(attack_grammar), gd_(defense_grammar), env_(env) {
    cfg_.validate();
    rec_.run_id = std::move(run_id);
    rec_.config = cfg_;
    rec_.attacker_direction = env_.attacker_direction();
    rec_.attacker_archive = Archive(cfg_.archive_capacity, cfg_.archive_admission, rec_.attacker_direction);
    rec_.defender_archive = Archive(cfg_.archive_capacity, cfg_.archive_admission, Direction::maximize);
  }

  RunRecord run() {
    std::vector<Genotype> a0, d0;
    for (std::size_t i = 0; i < cfg_.attackers; ++i) {
      RngStream rng(derive_key(cfg_.seed, {detail::role_tag(Role::attacker), 0, detail::tag_init, i}));
      a0.push_back(random_genotype(rng, cfg_.genotype));
    }
    for (std::size_t i = 0; i < cfg_.defenders; ++i) {
      RngStream rng(derive_key(cfg_.seed, {detail::role_tag(Role::defender), 0, detail::tag_init, i}));
      d0.push_back(random_genotype(rng, cfg_.genotype));
    }
    rec_.initial_attackers = a0;
    rec_.initial_defenders = d0;
    attackers_ = build_side<Attack>(std::move(a0), Role::attacker);
    defenders_ = build_side<Defense>(std::move(d0), Role::defender);

    for (std::size_t t = 1; t <= cfg_.generations; ++t) {
      half_step<Role::attacker>(t);
      half_step<Role::defender>(t);
    }

    rec_.best_attacker = champion(attackers_, Role::attacker);
    rec_.best_defender = champion(defenders_, Role::defender);
    rec_.reported_attackers = reported(attackers_, Role::attacker);
    rec_.reported_defenders = reported(defenders_, Role::defender);
    return std::move(rec_);
  }

 private:
  Direction dir(Role r) const { return rec_.direction(r); }

  template <class T>
  detail::Side<T> build_side(std::vector<Genotype> genotypes, Role role) const {
    detail::Side<T> s;
    s.genotypes = std::move(genotypes);
    s.texts.resize(s.size());
    s.payload.resize(s.size());
    const Grammar& g = role == Role::attacker ? ga_ : gd_;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto m = map_genotype(s.genotypes[i], g, cfg_.mapping);
      if (auto* st = std::get_if<Strategy>(&m)) {
        s.texts[i] = st->text();
        if constexpr (std::is_same_v<T, Attack>) {
          if (role == Role::attacker) s.payload[i] = env_.interpret_attack(st->sentence);
        }
        if constexpr (std::is_same_v<T, Defense>) {
          if (role == Role::defender) s.payload[i] = env_.interpret_defense(st->sentence);
        }
      }
    }
    return s;
  }

  std::vector<EngagementOutcome> engage(const std::vector<Pairing>& pairs,
                                        const detail::Side<Attack>& att,
                                        const detail::Side<Defense>& def, std::size_t t) const {
    std::vector<EngagementOutcome> out(pairs.size());
    const std::size_t threads = Env::concurrent_engage ? cfg_.threads : 1;
    detail::parallel_for(pairs.size(), threads, [&](std::size_t k) {
      const auto& p = pairs[k];
      auto key = engagement_key(cfg_.seed, att.texts[p.attacker], def.texts[p.defender]);
      out[k] = env_.engage(*att.payload[p.attacker], *def.payload[p.defender], key);
      out[k].attacker_id = p.attacker;
      out[k].defender_id = p.defender;
      out[k].generation = t;
    });
    return out;
  }

  void log(const std::vector<EngagementOutcome>& outcomes, std::size_t t, const std::string& phase,
           const detail::Side<Attack>& att, const detail::Side<Defense>& def,
           std::optional<std::size_t> relabel = {}, Role relabel_role = Role::attacker) {
    for (auto o : outcomes) {
      EngagementRecord r;
      r.generation = t;
      r.phase = phase;
      r.attacker_genotype = att.genotypes[o.attacker_id];
      r.defender_genotype = def.genotypes[o.defender_id];
      r.attacker_sentence = att.texts[o.attacker_id];
      r.defender_sentence = def.texts[o.defender_id];
      if (relabel) (relabel_role == Role::attacker ? o.attacker_id : o.defender_id) = *relabel;
      r.outcome = std::move(o);
      rec_.engagements.push_back(std::move(r));
    }
  }

  // Engagements of `own` (role R) against `opp` under the configured structure.
  template <Role R, class Own, class Opp>
  std::vector<EngagementOutcome> evaluate(const Own& own, const Opp& opp, std::size_t t) {
    const auto& att = [&]() -> const detail::Side<Attack>& {
      if constexpr (R == Role::attacker) return own; else return opp;
    }();
    const auto& def = [&]() -> const detail::Side<Defense>& {
      if constexpr (R == Role::attacker) return opp; else return own;
    }();
    RngStream rng(derive_key(cfg_.seed, {detail::role_tag(R), t, detail::tag_pair}));
    auto att_ids = att.valid_ids();
    auto def_ids = def.valid_ids();
    if (att_ids.empty() || def_ids.empty()) return {};

    using Kind = CompetitionStructure::Kind;
    if (cfg_.structure.kind == Kind::spatial) {
      auto pairs = pair(cfg_.structure, att.size(), def.size(), rng);
      std::erase_if(pairs, [&](const Pairing& p) { return !att.valid(p.attacker) || !def.valid(p.defender); });
      return engage(pairs, att, def, t);
    }
    if (cfg_.structure.kind != Kind::tournament) return engage(pair(cfg_.structure, att_ids, def_ids, rng), att, def, t);

    std::vector<EngagementOutcome> all;
    for (std::size_t round = 0; round < cfg_.structure.rounds; ++round) {
      if (round > 0 && att_ids.size() == 1 && def_ids.size() == 1) break;
      auto outcomes = engage(pair(cfg_.structure, att_ids, def_ids, rng), att, def, t);
      auto sa = detail::score_outcomes(outcomes, Role::attacker, att.size(), dir(Role::attacker), cfg_);
      auto sd = detail::score_outcomes(outcomes, Role::defender, def.size(), Direction::maximize, cfg_);
      std::vector<double> fa, fd;
      for (auto i : att_ids) fa.push_back(sa.fitness[i]);
      for (auto i : def_ids) fd.push_back(sd.fitness[i]);
      all.insert(all.end(), outcomes.begin(), outcomes.end());
      att_ids = tournament_survivors(att_ids, fa, dir(Role::attacker));
      def_ids = tournament_survivors(def_ids, fd, Direction::maximize);
    }
    return all;
  }

  template <Role R>
  void half_step(std::size_t t) {
    using Own = std::conditional_t<R == Role::attacker, Attack, Defense>;
    auto& own = [&]() -> detail::Side<Own>& {
      if constexpr (R == Role::attacker) return attackers_; else return defenders_;
    }();
    const auto& opp = [&]() -> const auto& {
      if constexpr (R == Role::attacker) return defenders_; else return attackers_;
    }();
    const Direction d = dir(R);
    const auto n = own.size();
    const auto tag = detail::role_tag(R);
    const std::string phase(to_string(R));

    // Variation.
    RngStream sel_rng(derive_key(cfg_.seed, {tag, t, detail::tag_select}));
    auto parents = select(n, own.evaluated ? &own.fitness : nullptr, cfg_.selection, sel_rng, d);
    std::vector<Genotype> children;
    children.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      RngStream rng(derive_key(cfg_.seed, {tag, t, detail::tag_mutate, i}));
      children.push_back(mutate(own.genotypes[parents[i]], cfg_.mutation, rng, cfg_.genotype));
    }
    for (std::size_t i = 0; i + 1 < n; i += 2) {
      RngStream rng(derive_key(cfg_.seed, {tag, t, detail::tag_crossover, i / 2}));
      auto [x, y] = crossover(children[i], children[i + 1], cfg_.crossover, rng, cfg_.genotype);
      children[i] = std::move(x);
      children[i + 1] = std::move(y);
    }

    // Evaluation against the frozen opponents.
    auto cand = build_side<Own>(std::move(children), R);
    auto outcomes = evaluate<R>(cand, opp, t);
    if constexpr (R == Role::attacker) log(outcomes, t, phase, cand, opp);
    else log(outcomes, t, phase, opp, cand);
    auto scores = detail::score_outcomes(outcomes, R, n, d, cfg_);
    cand.fitness = std::move(scores.fitness);
    cand.primary = std::move(scores.primary);
    cand.cost = std::move(scores.cost);
    cand.values = std::move(scores.values);
    cand.evaluated = true;

    HalfStep step;
    step.generation = t;
    step.role = R;
    step.engagements = outcomes.size();

    // Elitist replacement.
    if (own.evaluated) {
      const auto inc = best_index(own.fitness, d);
      if (own.valid(inc)) {
        detail::Side<Own> solo;
        solo.genotypes = {own.genotypes[inc]};
        solo.texts = {own.texts[inc]};
        solo.payload = {own.payload[inc]};
        std::vector<Pairing> pairs;
        for (auto j : opp.valid_ids())
          pairs.push_back(R == Role::attacker ? Pairing{0, j} : Pairing{j, 0});
        std::vector<EngagementOutcome> inc_out;
        if constexpr (R == Role::attacker) {
          inc_out = engage(pairs, solo, opp, t);
          log(inc_out, t, phase + "-incumbent", solo, opp, inc, R);
        } else {
          inc_out = engage(pairs, opp, solo, t);
          log(inc_out, t, phase + "-incumbent", opp, solo, inc, R);
        }
        step.engagements += inc_out.size();
        auto s = detail::score_outcomes(inc_out, R, 1, d, cfg_);

        Incumbent info;
        info.index = inc;
        info.genotype = own.genotypes[inc];
        info.sentence = own.texts[inc];
        info.fitness = s.fitness[0];
        const auto worst = worst_index(cand.fitness, d);
        if (!inc_out.empty() && better(s.fitness[0], cand.fitness[worst], d)) {
          info.kept = true;
          info.replaced = worst;
          cand.genotypes[worst] = own.genotypes[inc];
          cand.texts[worst] = own.texts[inc];
          cand.payload[worst] = own.payload[inc];
          cand.fitness[worst] = s.fitness[0];
          cand.primary[worst] = s.primary[0];
          cand.cost[worst] = s.cost[0];
          cand.values[worst] = s.values[0];
        }
        step.incumbent = std::move(info);
      }
    }
    own = std::move(cand);

    // Statistics and archive.
    step.population = own.genotypes;
    step.sentences = own.texts;
    step.fitness = own.fitness;
    std::vector<double> valid_fit;
    for (std::size_t i = 0; i < n; ++i) {
      step.valid.push_back(own.valid(i));
      if (own.valid(i) && !own.values[i].empty()) valid_fit.push_back(own.fitness[i]);
    }
    step.invalid = n - std::size_t(std::count(step.valid.begin(), step.valid.end(), true));
    step.best_index = best_index(own.fitness, d);
    step.best_fitness = own.fitness[step.best_index];
    step.best_primary = own.primary[step.best_index];
    step.best_cost = own.cost[step.best_index];
    step.mean_fitness = valid_fit.empty() ? 0.0 : aggregate(valid_fit, Aggregation::mean);
    step.variance = variance(valid_fit);

    if (own.valid(step.best_index) && !own.values[step.best_index].empty()) {
      ArchiveEntry e{own.genotypes[step.best_index], own.texts[step.best_index], R, t,
                     step.best_fitness, step.best_primary, step.best_cost};
      (R == Role::attacker ? rec_.attacker_archive : rec_.defender_archive).admit(std::move(e));
    }
    rec_.steps.push_back(std::move(step));
  }

  template <class T>
  Champion champion(const detail::Side<T>& s, Role r) const {
    Champion c;
    c.index = best_index(s.fitness, dir(r));
    c.genotype = s.genotypes[c.index];
    c.sentence = s.texts[c.index];
    c.fitness = s.fitness[c.index];
    c.primary = s.primary[c.index];
    c.cost = s.cost[c.index];
    return c;
  }

  // Members preferred under the reporting solution concept, from their last evaluation.
  template <class T>
  std::vector<std::size_t> reported(const detail::Side<T>& s, Role r) const {
    const Direction d = dir(r);
    std::vector<std::size_t> scored;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!s.values[i].empty()) scored.push_back(i);
    if (scored.empty()) return {};
    if (cfg_.solution == SolutionConcept::pareto) {
      std::vector<std::vector<double>> pts;
      for (auto i : scored) pts.push_back({s.primary[i], s.cost[i]});
      std::vector<std::size_t> out;
      for (auto k : pareto_front(pts, {d, Direction::minimize})) out.push_back(scored[k]);
      return out;
    }
    std::vector<double> key;
    for (auto i : scored) {
      const auto& v = s.values[i];
      if (cfg_.solution == SolutionConcept::meu) {
        key.push_back(aggregate(v, Aggregation::mean));
      } else {
        key.push_back(aggregate(v, d == Direction::minimize ? Aggregation::max : Aggregation::min));
      }
    }
    return {scored[best_index(key, d)]};
  }

  EvolutionConfig cfg_;
  const Grammar& ga_;
  const Grammar& gd_;
  const Env& env_;
  RunRecord rec_;
  detail::Side<Attack> attackers_;
  detail::Side<Defense> defenders_;
};

/// Run the alternating algorithm to completion.
template <Environment Env>
RunRecord run_alternating(const EvolutionConfig& cfg, const Grammar& attack_grammar,
                          const Grammar& defense_grammar, const Env& env, std::string run_id = {}) {
  return AlternatingRun<Env>(cfg, attack_grammar, defense_grammar, env, std::move(run_id)).run();
}

}  // namespace coevo
