// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "coevo/experiment.hpp"
#include "oracles.hpp"

using namespace coevo;
namespace fs = std::filesystem;

namespace {

std::string data(const std::string& rel) { return std::string(COEVO_DATA_DIR) + "/" + rel; }

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path scratch() {
  static const fs::path root = fs::temp_directory_path() / ("coevo_acceptance_" + std::to_string(::getpid()));
  return root;
}

// ---------------------------------------------------------------------------

Verdict mapping_oracle() {
  std::mt19937_64 rng(2718);
  std::size_t mismatches = 0, ok = 0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    auto tg = oracle::random_grammar(rng, 5);
    auto g = parse_bnf(tg.to_bnf());
    std::vector<std::uint32_t> codons(1 + rng() % 10);
    for (auto& c : codons) c = std::uint32_t(rng() % 65536);
    MappingConfig cfg;
    cfg.policy = trial % 2 ? CodonPolicy::consume_always : CodonPolicy::consume_on_choice;
    cfg.max_derivation_steps = 500;
    auto want = oracle::derive(tg, codons, cfg.max_wraps, cfg.policy == CodonPolicy::consume_always,
                               cfg.max_derivation_steps);
    auto got = map_genotype({codons}, g, cfg);
    const auto* s = std::get_if<Strategy>(&got);
    bool same = want.ok == (s != nullptr);
    if (same && s) {
      std::vector<std::string> expect;
      for (auto& t : want.sentence) expect.push_back(oracle::unquote(t));
      same = s->sentence == expect && s->codons_used == want.codons_used && s->wraps_used == want.wraps_used;
      ++ok;
    }
    if (!same) ++mismatches;
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "1000 pairs (" << ok << " mapped), " << mismatches << " mismatches, " << secs << " s";
  return {mismatches == 0 && secs < 5.0, d.str()};
}

Verdict engagement_counts() {
  RngStream rng(1);
  std::size_t deviations = 0;
  std::ostringstream d;
  for (std::size_t n : {2, 4, 8}) {
    if (pair(CompetitionStructure::one_vs_one(), n, n, rng).size() != n) ++deviations;
    if (pair(CompetitionStructure::all_vs_all(), n, n, rng).size() != n * n) ++deviations;
  }
  if (pair(CompetitionStructure::spatial(4, 3), 16, 16, rng).size() != 144) ++deviations;

  // The same counts inside a run: engagements logged per half-step.
  ddos::DdosEnvironment env(ddos::load_scenario(data("scenarios/bridged12.txt")));
  auto ga = load_bnf(data("grammars/ddos_attack.bnf"));
  auto gd = load_bnf(data("grammars/ddos_defense.bnf"));
  struct Case {
    CompetitionStructure s;
    std::size_t n, expect;
  };
  std::vector<Case> cases;
  for (std::size_t n : {2, 4, 8}) {
    cases.push_back({CompetitionStructure::one_vs_one(), n, n});
    cases.push_back({CompetitionStructure::all_vs_all(), n, n * n});
  }
  cases.push_back({CompetitionStructure::spatial(4, 3), 16, 144});
  std::size_t checked = 0;
  for (const auto& k : cases) {
    EvolutionConfig cfg;
    cfg.generations = 3;
    cfg.attackers = cfg.defenders = k.n;
    cfg.structure = k.s;
    // Long genotypes keep nearly every individual valid; half-steps with invalid members are not counted.
    cfg.genotype = {40, 40, 1 << 16};
    auto rec = run_alternating(cfg, ga, gd, env);
    for (const auto& st : rec.steps) {
      std::size_t main = 0;
      for (const auto& e : rec.engagements)
        if (e.generation == st.generation && e.phase == to_string(st.role)) ++main;
      const bool all_valid = st.invalid == 0;
      if (all_valid) {
        ++checked;
        if (main != k.expect) ++deviations;
      }
    }
  }
  d << deviations << " deviations over pair() and " << checked << " engine half-steps";
  return {deviations == 0 && checked > 0, d.str()};
}

Verdict determinism() {
  const auto dir = scratch() / "determinism";
  fs::create_directories(dir);
  struct Combo {
    std::string env, structure;
    std::size_t n;
  };
  std::vector<Combo> combos;
  for (const char* env : {"ddos", "contagion"})
    for (auto [s, n] : std::vector<std::pair<std::string, std::size_t>>{
             {"one-vs-one", 6}, {"all-vs-all", 6}, {"tournament:2", 8}, {"spatial:4:3", 16}})
      combos.push_back({env, s, n});
  std::size_t identical = 0;
  for (std::size_t k = 0; k < combos.size(); ++k) {
    const auto& c = combos[k];
    const bool d = c.env == "ddos";
    const auto ini = dir / ("c" + std::to_string(k) + ".ini");
    std::ofstream(ini) << "[experiment]\nenvironment = " << c.env << "\nattack_grammar = "
                       << data(d ? "grammars/ddos_attack.bnf" : "grammars/contagion_attack.bnf")
                       << "\ndefense_grammar = "
                       << data(d ? "grammars/ddos_defense.bnf" : "grammars/contagion_defense.bnf")
                       << "\nscenario = " << data(d ? "scenarios/bridged12.txt" : "topologies/two_tier.txt")
                       << "\n[evolution]\ngenerations = 4\nattackers = " << c.n << "\ndefenders = " << c.n
                       << "\nstructure = " << c.structure << "\nseed = 42\n";
    std::vector<std::string> logs;
    for (const char* store : {"a", "b"}) {
      RunOptions opt;
      opt.store = (dir / (std::string(store) + std::to_string(k))).string();
      opt.quiet = true;
      std::ostringstream sink;
      auto id = cmd_run(ini, opt, sink).at(0);
      const auto run = fs::path(opt.store) / "runs" / id;
      logs.push_back(slurp(run / "engagements.jsonl") + slurp(run / "generations.jsonl"));
    }
    if (!logs[0].empty() && logs[0] == logs[1]) ++identical;
  }
  std::ostringstream d;
  d << identical << "/" << combos.size() << " config combinations byte-identical";
  return {identical == combos.size() && combos.size() >= 4, d.str()};
}

template <class Env>
std::size_t elitism_violations(const Env& env, const Grammar& ga, const Grammar& gd, std::size_t n,
                               std::size_t& checked) {
  EvolutionConfig cfg;
  cfg.generations = 50;
  cfg.attackers = cfg.defenders = n;
  cfg.structure = CompetitionStructure::all_vs_all();
  cfg.mutation = 0.3;
  cfg.seed = 5;
  auto rec = run_alternating(cfg, ga, gd, env);
  std::size_t bad = 0;
  for (const auto& st : rec.steps) {
    if (!st.incumbent) continue;
    ++checked;
    const Direction d = rec.direction(st.role);
    const auto phase = std::string(to_string(st.role)) + "-incumbent";
    std::vector<double> vals;
    for (const auto& e : rec.engagements)
      if (e.generation == st.generation && e.phase == phase)
        vals.push_back(engagement_value(e.outcome, st.role, d, cfg.secondary_weight));
    // Re-evaluated fitness must be what the log says, and the next population's best
    // must be at least as good as the incumbent against the same frozen opponents.
    if (vals.empty() || std::abs(aggregate(vals, cfg.aggregation) - st.incumbent->fitness) > 1e-12) ++bad;
    else if (better(st.incumbent->fitness, st.best_fitness, d)) ++bad;
  }
  return bad;
}

Verdict elitism() {
  std::size_t checked = 0, bad = 0;
  ddos::DdosEnvironment denv(ddos::load_scenario(data("scenarios/bridged12.txt")));
  bad += elitism_violations(denv, load_bnf(data("grammars/ddos_attack.bnf")), load_bnf(data("grammars/ddos_defense.bnf")),
                            10, checked);
  contagion::ContagionEnvironment cenv(contagion::load_scenario(data("topologies/two_tier.txt")));
  bad += elitism_violations(cenv, load_bnf(data("grammars/contagion_attack.bnf")),
                            load_bnf(data("grammars/contagion_defense.bnf")), 8, checked);
  std::ostringstream d;
  d << bad << " violations over " << checked << " half-steps (2 environments x 50 generations)";
  return {bad == 0 && checked == 2 * 2 * 49, d.str()};
}

Verdict pareto_nash() {
  std::mt19937_64 rng(31);
  std::size_t pareto_bad = 0, nash_bad = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t r = 1 + rng() % 8, c = 1 + rng() % 8;
    const bool coarse = t % 2 == 0;  // small integers produce many ties
    PayoffMatrix m;
    m.attacker_direction = t % 3 ? Direction::minimize : Direction::maximize;
    m.cells.assign(r, std::vector<double>(c));
    for (auto& row : m.cells)
      for (auto& v : row) v = coarse ? double(rng() % 4) : std::uniform_real_distribution<double>(-1, 1)(rng);
    for (std::size_t i = 0; i < r; ++i) m.attackers.push_back("A" + std::to_string(i));
    for (std::size_t j = 0; j < c; ++j) m.defenders.push_back("D" + std::to_string(j));

    if (pure_nash_pairs(m) != oracle::nash(m.cells, m.attacker_direction == Direction::maximize)) ++nash_bad;

    std::vector<Direction> dirs(c);
    std::vector<bool> maximize(c);
    for (std::size_t j = 0; j < c; ++j) {
      dirs[j] = rng() % 2 ? Direction::maximize : Direction::minimize;
      maximize[j] = dirs[j] == Direction::maximize;
    }
    if (pareto_front(m.cells, dirs) != oracle::nondominated(m.cells, maximize)) ++pareto_bad;
  }
  std::ostringstream d;
  d << "200 matrices: " << pareto_bad << " pareto mismatches, " << nash_bad << " nash mismatches";
  return {pareto_bad == 0 && nash_bad == 0, d.str()};
}

Verdict ddos_cases() {
  std::size_t bad = 0;
  const std::vector<ddos::DdosDefense> defenses{{ddos::Routing::shortest_path, 1}, {ddos::Routing::flooding, 1},
                                                {ddos::Routing::p2p_ring, 1}, {ddos::Routing::p2p_ring, 4}};
  for (const char* f : {"scenarios/mesh12.txt", "scenarios/bridged12.txt", "scenarios/ring12_test.txt"}) {
    ddos::DdosEnvironment env(ddos::load_scenario(data(f)));
    ddos::DdosAttack all;
    for (std::size_t v = 0; v < env.scenario().nodes; ++v) all.actions.push_back({v, 0, env.scenario().horizon});
    for (const auto& d : defenses) {
      if (env.engage({}, d, 0).attacker_score != 0.0) ++bad;
      if (env.engage(all, d, 0).attacker_score != 1.0) ++bad;
    }
  }

  std::mt19937_64 rng(99);
  std::size_t flood_bad = 0, checks = 0;
  for (int g = 0; g < 100; ++g) {
    const std::size_t n = 2 + rng() % 14;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::string text = "nodes " + std::to_string(n) + "\n";
    for (std::size_t v = 1; v < n; ++v) edges.emplace_back(rng() % v, v);
    for (std::size_t k = 0, extra = rng() % (2 * n); k < extra; ++k) {
      std::size_t a = rng() % n, b = rng() % n;
      if (a != b) edges.emplace_back(a, b);
    }
    for (auto [a, b] : edges) text += "edge " + std::to_string(a) + " " + std::to_string(b) + "\n";
    const std::size_t src = rng() % n, dst = rng() % n;
    text += "task " + std::to_string(src) + " " + std::to_string(dst) + " 0 1 1\nhorizon 1\nbudget 1000\n";
    ddos::DdosEnvironment env(ddos::parse_scenario(text));
    for (int s = 0; s < 20; ++s) {
      std::vector<bool> enabled(n, true);
      ddos::DdosAttack a;
      for (std::size_t v = 0; v < n; ++v)
        if (rng() % 4 == 0) {
          enabled[v] = false;
          a.actions.push_back({v, 0, 1});
        }
      const bool ok = oracle::connected(n, edges, enabled, src, dst);
      ++checks;
      if (env.engage(a, {ddos::Routing::flooding, 1}, 0).attacker_score != (ok ? 0.0 : 1.0)) ++flood_bad;
    }
  }
  std::ostringstream d;
  d << bad << " degenerate-case failures; flooding vs component oracle " << flood_bad << "/" << checks
    << " mismatches on 100 graphs";
  return {bad == 0 && flood_bad == 0, d.str()};
}

Verdict contagion_cases() {
  using namespace contagion;
  std::ostringstream d;
  bool pass = true;

  auto s = load_scenario(data("topologies/two_tier.txt"));
  s.mc.trials = 1000;
  {
    ContagionEnvironment env(s);
    ContagionAttack zero{{{0, 0.0, 20, 1}, {1, 0.0, 4, 3}}};
    ContagionDefense def{{0, 1, 2}, {0.5, 0.5, 0.5, 0.5}};
    auto o = env.engage(zero, def, 1);
    double worst = 0;
    for (double v : o.series.at("delay")) worst = std::max(worst, v);
    d << "zero-strength max delay " << worst << " over 1000 trials; ";
    pass = pass && worst == 0.0 && o.telemetry.at("mean_delay") == 0.0;
  }
  {
    auto one = parse_scenario("enclaves 1\nspread_rate 0.5\ncross_rate 0\ncleanse_duration 1\nmission_devices 1\n"
                              "trials 1000\nhorizon 12\nbase_duration 10\ndevice_delay 1\ncleanse_delay 2\n");
    ContagionEnvironment env(one);
    ContagionAttack a{{{0, 0.3, 12, 1}}};
    ContagionDefense def{{0}, {1.0}};
    auto o = env.engage(a, def, 2);
    const auto& inf = o.series.at("first_infection_tick");
    const auto& cl = o.series.at("first_cleanse_tick");
    std::size_t infected = 0, late = 0;
    for (std::size_t k = 0; k < inf.size(); ++k) {
      if (inf[k] >= 0) ++infected;
      if (inf[k] != cl[k]) ++late;
    }
    d << "sensitivity-1 cleanse late in " << late << "/" << infected << " infected trials; ";
    pass = pass && late == 0 && infected > 0;
  }
  {
    std::vector<double> se;
    for (std::size_t trials : {10, 100, 1000}) {
      auto t = s;
      t.mc.trials = trials;
      ContagionEnvironment env(t);
      ContagionAttack a{{{1, 0.5, 4, 2}}};
      ContagionDefense def{{0, 1, 2}, {0.25, 0.25, 0.25, 0.25}};
      auto delays = env.engage(a, def, 3).series.at("delay");
      double m = 0, ss = 0;
      for (double v : delays) m += v / double(delays.size());
      for (double v : delays) ss += (v - m) * (v - m);
      se.push_back(std::sqrt(ss / double(delays.size() - 1)) / std::sqrt(double(delays.size())));
    }
    d << "standard errors " << se[0] << ", " << se[1] << ", " << se[2];
    for (std::size_t k = 0; k + 1 < se.size(); ++k) {
      const double ratio = se[k] / se[k + 1];
      pass = pass && ratio > std::sqrt(10.0) / 2 && ratio < std::sqrt(10.0) * 2;
    }
  }
  return {pass, d.str()};
}

Verdict arms_race() {
  const auto dir = scratch() / "arms_race";
  std::ostringstream d;
  bool pass = true;
  std::size_t disagreeing = 0;
  double slowest = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunOptions opt;
    opt.store = (dir / ("store" + std::to_string(seed))).string();
    opt.seed = seed;
    opt.quiet = true;
    std::ostringstream sink;
    const auto t0 = Clock::now();
    auto id = cmd_run(data("configs/ddos.ini"), opt, sink).at(0);
    slowest = std::max(slowest, seconds_since(t0));

    auto cfg = load_experiment_config(data("configs/ddos.ini"));
    auto steps = load_generations(fs::path(opt.store) / "runs" / id / "generations.jsonl");
    std::set<double> attacker_best;
    std::size_t gens = 0;
    for (const auto& st : steps)
      if (st.role == Role::attacker) {
        attacker_best.insert(st.best_fitness);
        ++gens;
      }
    pass = pass && gens == 30 && cfg.evolution.generations == 30 && cfg.evolution.attackers == 20 &&
           cfg.evolution.defenders == 20;
    if (seed == 1) {
      d << "seed 1: " << attacker_best.size() << " distinct attacker best values; ";
      pass = pass && attacker_best.size() > 1;
    }

    EstabloOptions eo;
    eo.store = opt.store;
    eo.out_dir = dir / ("report" + std::to_string(seed));
    eo.quiet = true;
    auto r = cmd_establo(eo, sink);
    for (Role role : {Role::attacker, Role::defender}) {
      std::string top_meu, top_bw;
      for (const auto& row : r.rankings) {
        if (row.role != role) continue;
        if (row.rank_meu == 1) top_meu = row.id;
        if (row.rank_best_worst == 1) top_bw = row.id;
      }
      if (top_meu != top_bw) {
        ++disagreeing;
        d << "seed " << seed << " " << to_string(role) << ": meu picks " << top_meu << ", best-worst picks " << top_bw
          << "; ";
        break;
      }
    }
  }
  d << "slowest run " << slowest << " s";
  return {pass && slowest < 60.0 && disagreeing >= 1, d.str()};
}

Verdict rank_invariance() {
  std::mt19937_64 rng(77);
  std::size_t violations = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t r = 1 + rng() % 8, c = 1 + rng() % 8;
    PayoffMatrix m;
    m.attacker_direction = t % 2 ? Direction::minimize : Direction::maximize;
    m.cells.assign(r, std::vector<double>(c));
    for (auto& row : m.cells)
      for (auto& v : row) v = t % 3 == 0 ? double(rng() % 5) : std::uniform_real_distribution<double>(0, 1)(rng);
    for (std::size_t i = 0; i < r; ++i) m.attackers.push_back("A" + std::to_string(i));
    for (std::size_t j = 0; j < c; ++j) m.defenders.push_back("D" + std::to_string(j));
    auto scaled = m;
    const double a = std::exp(std::uniform_real_distribution<double>(-4, 4)(rng));
    const double b = std::uniform_real_distribution<double>(-1000, 1000)(rng);
    for (auto& row : scaled.cells)
      for (auto& v : row) v = a * v + b;
    for (Role role : {Role::attacker, Role::defender}) {
      auto r1 = rank(m, role), r2 = rank(scaled, role);
      for (std::size_t i = 0; i < r1.size(); ++i)
        if (r1[i].rank_meu != r2[i].rank_meu || r1[i].rank_best_worst != r2[i].rank_best_worst ||
            r1[i].rank_combined != r2[i].rank_combined)
          ++violations;
    }
  }
  std::ostringstream d;
  d << violations << " rank changes on 50 matrices";
  return {violations == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"mapping matches derivation oracle", mapping_oracle},
      {"engagement counts are exact", engagement_counts},
      {"identical config and seed give identical logs", determinism},
      {"elitist incumbent never worsens", elitism},
      {"pareto front and pure nash match brute force", pareto_nash},
      {"ddos degenerate cases and flooding oracle", ddos_cases},
      {"contagion degenerate cases and error scaling", contagion_cases},
      {"arms-race smoke test", arms_race},
      {"rankings invariant under positive affine maps", rank_invariance},
  };
  fs::remove_all(scratch());
  fs::create_directories(scratch());
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v{false, ""};
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << k + 1 << ": " << criteria[k].first << " (" << v.detail
              << ")" << std::endl;
  }
  fs::remove_all(scratch());
  return failures ? 1 : 0;
}
