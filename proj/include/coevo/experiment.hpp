#pragma once

// Experiment configuration, results store and the command implementations
// behind the coevo tool.
//
// Config files are INI:
//   [experiment]  environment, attack_grammar, defense_grammar, scenario,
//                 repetitions, label, store, threads
//   [evolution]   generations, attackers, defenders, mutation, crossover,
//                 selection (tournament:K | truncation:F),
//                 structure (one-vs-one | all-vs-all | tournament:R | spatial:M:C),
//                 aggregation, solution, archive_capacity, archive_admission,
//                 seed, secondary_weight
//   [genotype]    min_len, max_len, codon_max
//   [mapping]     max_wraps, policy, max_derivation_steps
// Relative paths are resolved against the config file's directory.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "coevo/engine.hpp"
#include "coevo/env/contagion.hpp"
#include "coevo/env/ddos.hpp"
#include "coevo/establo.hpp"
#include "coevo/record_io.hpp"

namespace coevo {

namespace fs = std::filesystem;

inline constexpr const char* store_env_var = "COEVO_STORE";

struct ExperimentConfig {
  std::string environment;
  fs::path attack_grammar;
  fs::path defense_grammar;
  fs::path scenario;
  std::size_t repetitions = 1;
  std::string label = "alternating";
  fs::path store;  // empty: use the default root
  EvolutionConfig evolution;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(p.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

namespace pt = boost::property_tree;

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"experiment", {"environment", "attack_grammar", "defense_grammar", "scenario", "repetitions", "label",
                      "store", "threads"}},
      {"evolution", {"generations", "attackers", "defenders", "mutation", "crossover", "selection", "structure",
                     "aggregation", "solution", "archive_capacity", "archive_admission", "seed",
                     "secondary_weight"}},
      {"genotype", {"min_len", "max_len", "codon_max"}},
      {"mapping", {"max_wraps", "policy", "max_derivation_steps"}},
  };
  return schema;
}

template <class T>
T get_field(const pt::ptree& tree, const std::string& key, const T& fallback, bool required = false) {
  auto node = tree.get_child_optional(pt::ptree::path_type(key, '.'));
  if (!node) {
    if (required) throw ConfigError("missing required field '" + key + "'");
    return fallback;
  }
  const auto text = node->get_value<std::string>();
  auto v = node->get_value_optional<T>();
  if (!v || text.empty()) throw ConfigError("field '" + key + "' has invalid value '" + text + "'");
  if constexpr (std::is_unsigned_v<T>)
    if (text.find('-') != std::string::npos) throw ConfigError("field '" + key + "' must be non-negative");
  return *v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) { out.push_back(cur); cur.clear(); }
    else cur += c;
  }
  out.push_back(cur);
  return out;
}

inline std::size_t to_size(const std::string& s, const std::string& field) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("field '" + field + "' has invalid number '" + s + "'");
  return v;
}

}  // namespace detail

/// Parses "one-vs-one", "all-vs-all", "tournament:R" or "spatial:M:C".
inline CompetitionStructure parse_structure(const std::string& s, const std::string& field = "evolution.structure") {
  auto parts = detail::split(s, ':');
  if (parts[0] == "one-vs-one" && parts.size() == 1) return CompetitionStructure::one_vs_one();
  if (parts[0] == "all-vs-all" && parts.size() == 1) return CompetitionStructure::all_vs_all();
  if (parts[0] == "tournament" && parts.size() == 2) {
    auto r = detail::to_size(parts[1], field);
    if (r < 1) throw ConfigError("field '" + field + "': tournament rounds must be >= 1");
    return CompetitionStructure::tournament(r);
  }
  if (parts[0] == "spatial" && parts.size() == 3)
    return CompetitionStructure::spatial(detail::to_size(parts[1], field), detail::to_size(parts[2], field));
  throw ConfigError("field '" + field + "' has unknown competition structure '" + s + "'");
}

/// Parses "tournament:K" or "truncation:F".
inline SelectionScheme parse_selection(const std::string& s, const std::string& field = "evolution.selection") {
  auto parts = detail::split(s, ':');
  if (parts.size() == 2 && parts[0] == "tournament") return SelectionScheme::tournament(detail::to_size(parts[1], field));
  if (parts.size() == 2 && parts[0] == "truncation") {
    try {
      std::size_t used = 0;
      double f = std::stod(parts[1], &used);
      if (used == parts[1].size()) return SelectionScheme::truncation(f);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("field '" + field + "' has unknown selection scheme '" + s + "'");
}

inline ExperimentConfig parse_experiment_config(std::istream& in, const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  const auto& schema = detail::config_schema();
  for (const auto& [section, body] : tree) {
    auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError("unknown section '" + section + "'");
    if (body.empty() && !body.data().empty()) throw ConfigError("field '" + section + "' must be inside a section");
    for (const auto& [key, v] : body)
      if (!it->second.count(key)) throw ConfigError("unknown field '" + section + "." + key + "'");
  }

  using detail::get_field;
  ExperimentConfig c;
  auto path_field = [&](const std::string& key) {
    auto p = fs::path(get_field<std::string>(tree, key, "", true));
    p = p.is_absolute() ? p : base_dir / p;
    if (!fs::exists(p)) throw ConfigError("field '" + key + "': file not found: " + p.string());
    return p.lexically_normal();
  };
  c.environment = get_field<std::string>(tree, "experiment.environment", "", true);
  if (c.environment != "ddos" && c.environment != "contagion")
    throw ConfigError("field 'experiment.environment' must be 'ddos' or 'contagion', got '" + c.environment + "'");
  c.attack_grammar = path_field("experiment.attack_grammar");
  c.defense_grammar = path_field("experiment.defense_grammar");
  c.scenario = path_field("experiment.scenario");
  c.repetitions = get_field<std::size_t>(tree, "experiment.repetitions", 1);
  if (c.repetitions < 1) throw ConfigError("field 'experiment.repetitions' must be >= 1");
  c.label = get_field<std::string>(tree, "experiment.label", c.label);
  if (auto s = get_field<std::string>(tree, "experiment.store", ""); !s.empty())
    c.store = fs::path(s).is_absolute() ? fs::path(s) : base_dir / s;

  auto& e = c.evolution;
  e.threads = get_field<std::size_t>(tree, "experiment.threads", e.threads);
  e.generations = get_field<std::size_t>(tree, "evolution.generations", e.generations);
  e.attackers = get_field<std::size_t>(tree, "evolution.attackers", e.attackers);
  e.defenders = get_field<std::size_t>(tree, "evolution.defenders", e.defenders);
  e.mutation = get_field<double>(tree, "evolution.mutation", e.mutation);
  e.crossover = get_field<double>(tree, "evolution.crossover", e.crossover);
  if (auto s = get_field<std::string>(tree, "evolution.selection", ""); !s.empty()) e.selection = parse_selection(s);
  if (auto s = get_field<std::string>(tree, "evolution.structure", ""); !s.empty()) e.structure = parse_structure(s);
  if (auto s = get_field<std::string>(tree, "evolution.aggregation", ""); !s.empty()) {
    auto a = parse_aggregation(s);
    if (!a) throw ConfigError("field 'evolution.aggregation' has unknown value '" + s + "'");
    e.aggregation = *a;
  }
  if (auto s = get_field<std::string>(tree, "evolution.solution", ""); !s.empty()) {
    auto v = parse_solution(s);
    if (!v) throw ConfigError("field 'evolution.solution' has unknown value '" + s + "'");
    e.solution = *v;
  }
  e.archive_capacity = get_field<std::size_t>(tree, "evolution.archive_capacity", e.archive_capacity);
  if (auto s = get_field<std::string>(tree, "evolution.archive_admission", ""); !s.empty()) {
    auto v = parse_admission(s);
    if (!v) throw ConfigError("field 'evolution.archive_admission' has unknown value '" + s + "'");
    e.archive_admission = *v;
  }
  e.seed = get_field<std::uint64_t>(tree, "evolution.seed", e.seed);
  e.secondary_weight = get_field<double>(tree, "evolution.secondary_weight", e.secondary_weight);
  e.genotype.min_len = get_field<std::size_t>(tree, "genotype.min_len", e.genotype.min_len);
  e.genotype.max_len = get_field<std::size_t>(tree, "genotype.max_len", e.genotype.max_len);
  e.genotype.codon_max = get_field<std::uint64_t>(tree, "genotype.codon_max", e.genotype.codon_max);
  e.mapping.max_wraps = get_field<std::size_t>(tree, "mapping.max_wraps", e.mapping.max_wraps);
  if (auto s = get_field<std::string>(tree, "mapping.policy", ""); !s.empty()) {
    auto v = parse_policy(s);
    if (!v) throw ConfigError("field 'mapping.policy' has unknown value '" + s + "'");
    e.mapping.policy = *v;
  }
  e.mapping.max_derivation_steps = get_field<std::size_t>(tree, "mapping.max_derivation_steps",
                                                          e.mapping.max_derivation_steps);
  try {
    e.validate();
  } catch (const Error& err) {
    throw ConfigError(std::string("evolution: ") + err.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file not found: " + path.string());
  try {
    return parse_experiment_config(in, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Calls `fn(env)` with the environment named `id` built from `scenario`.
template <class F>
decltype(auto) with_environment(const std::string& id, const fs::path& scenario, F&& fn) {
  if (id == "ddos") {
    ddos::DdosEnvironment env(ddos::load_scenario(scenario.string()));
    return fn(env);
  }
  if (id == "contagion") {
    contagion::ContagionEnvironment env(contagion::load_scenario(scenario.string()));
    return fn(env);
  }
  throw ConfigError("unknown environment '" + id + "'");
}

// ---- results store ----------------------------------------------------------

struct IndexEntry {
  std::string run_id;
  std::string environment;
  std::string label;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Directory-per-run store with an append-only index.jsonl.
class ResultsStore {
 public:
  explicit ResultsStore(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const noexcept { return root_; }
  fs::path index_path() const { return root_ / "index.jsonl"; }
  fs::path run_dir(const std::string& id) const { return root_ / "runs" / id; }

  std::vector<IndexEntry> index() const {
    std::vector<IndexEntry> out;
    if (!fs::exists(index_path())) return out;
    detail::for_each_line(index_path(), [&](const json& j) {
      out.push_back({j.at("run_id").get<std::string>(), j.at("environment").get<std::string>(),
                     j.at("label").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                     j.at("config_hash").get<std::string>()});
    });
    return out;
  }

  bool contains(const std::string& id) const {
    for (const auto& e : index())
      if (e.run_id == id) return true;
    return false;
  }

  /// `base`, or `base-2`, `base-3`, ... when already taken.
  std::string allocate_id(const std::string& base) const {
    std::set<std::string> taken;
    for (const auto& e : index()) taken.insert(e.run_id);
    std::string id = base;
    for (std::size_t k = 2; taken.count(id) || fs::exists(run_dir(id)); ++k) id = base + "-" + std::to_string(k);
    return id;
  }

  fs::path create_run_dir(const std::string& id) const {
    auto d = run_dir(id);
    fs::create_directories(d);
    return d;
  }

  void append_index(const IndexEntry& e) const {
    fs::create_directories(root_);
    std::ofstream out(index_path(), std::ios::binary | std::ios::app);
    if (!out) throw Error(index_path().string() + ": cannot open for writing");
    json j = {{"format_version", format_version}, {"run_id", e.run_id},   {"environment", e.environment},
              {"label", e.label},                 {"seed", e.seed},       {"config_hash", e.config_hash}};
    out << j.dump() << '\n';
  }

 private:
  fs::path root_;
};

/// Store root: explicit override, then $COEVO_STORE, then the config's
/// store field, then ./results.
inline fs::path resolve_store(const std::string& override_root, const fs::path& config_store = {}) {
  if (!override_root.empty()) return override_root;
  if (const char* env = std::getenv(store_env_var); env && *env) return env;
  if (!config_store.empty()) return config_store;
  return "results";
}

inline std::string utc_timestamp() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// ---- commands ---------------------------------------------------------------

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::string store;  // empty: resolve_store()
  bool quiet = false;
};

/// Executes the configured repetitions with seeds base, base+1, ... and
/// persists each run. Returns the new run ids.
inline std::vector<std::string> cmd_run(const fs::path& config_path, const RunOptions& opt, std::ostream& out) {
  auto cfg = load_experiment_config(config_path);
  if (opt.seed) cfg.evolution.seed = *opt.seed;
  ResultsStore store(resolve_store(opt.store, cfg.store));

  const auto attack_text = read_file(cfg.attack_grammar);
  const auto defense_text = read_file(cfg.defense_grammar);
  const auto scenario_text = read_file(cfg.scenario);
  Grammar ga, gd;
  try {
    ga = parse_bnf(attack_text);
  } catch (const Error& e) {
    throw Error(cfg.attack_grammar.string() + ": " + e.what());
  }
  try {
    gd = parse_bnf(defense_text);
  } catch (const Error& e) {
    throw Error(cfg.defense_grammar.string() + ": " + e.what());
  }

  RunMeta meta;
  meta.label = cfg.label;
  meta.environment = cfg.environment;
  meta.attack_grammar_hash = content_hash(attack_text);
  meta.defense_grammar_hash = content_hash(defense_text);
  meta.scenario_hash = content_hash(scenario_text);

  std::vector<std::string> ids;
  with_environment(cfg.environment, cfg.scenario, [&](const auto& env) {
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
      auto evo = cfg.evolution;
      evo.seed = cfg.evolution.seed + rep;
      auto echo = config_to_json(evo);
      echo.erase("seed");
      const auto config_hash = content_hash(echo.dump() + cfg.environment + cfg.label + meta.attack_grammar_hash +
                                            meta.defense_grammar_hash + meta.scenario_hash);
      const auto id = store.allocate_id(config_hash.substr(0, 8) + "-s" + std::to_string(evo.seed));

      auto rec = run_alternating(evo, ga, gd, env, id);
      meta.created_at = utc_timestamp();
      const auto dir = store.create_run_dir(id);
      write_run(dir, rec, meta);
      detail::open_out(dir / "attack.bnf") << attack_text;
      detail::open_out(dir / "defense.bnf") << defense_text;
      detail::open_out(dir / "scenario.txt") << scenario_text;
      store.append_index({id, cfg.environment, cfg.label, evo.seed, config_hash});
      ids.push_back(id);

      if (!opt.quiet) {
        out << "run " << id << " seed " << evo.seed << '\n'
            << "  best attacker: '" << rec.best_attacker.sentence << "' fitness "
            << format_double(rec.best_attacker.fitness) << '\n'
            << "  best defender: '" << rec.best_defender.sentence << "' fitness "
            << format_double(rec.best_defender.fitness) << '\n';
      }
    }
  });
  return ids;
}

struct EstabloOptions {
  std::string store;
  CompendiumFilter filter = CompendiumFilter::best_per_generation;
  std::size_t stride = 5;
  std::vector<fs::path> scenarios;  // empty: the runs' own scenario
  fs::path out_dir = "establo";
  std::optional<std::uint64_t> seed;  // default: seed of the first indexed run
  bool quiet = false;
};

/// Library-level ESTABLO pass over stored runs, without touching the filesystem
/// beyond reading. `scenarios` pairs a context label with a scenario file.
inline EstabloResult run_establo(const std::vector<StoredRun>& runs,
                                 const std::vector<std::pair<std::string, fs::path>>& scenarios,
                                 CompendiumFilter filter, std::size_t stride, std::uint64_t seed) {
  EstabloResult r;
  r.compendium = build_compendium(runs, filter, stride);
  for (const auto& [context, path] : scenarios)
    with_environment(r.compendium.environment, path,
                     [&](const auto& env) { add_context(r, env, seed, context); });
  return r;
}

inline EstabloResult cmd_establo(const EstabloOptions& opt, std::ostream& out) {
  ResultsStore store(resolve_store(opt.store));
  const auto index = store.index();
  if (index.empty()) throw EmptyStore("no runs in store " + store.root().string());
  std::vector<StoredRun> runs;
  for (const auto& e : index) runs.push_back(load_stored_run(store.run_dir(e.run_id)));

  std::vector<std::pair<std::string, fs::path>> contexts;
  if (opt.scenarios.empty()) {
    contexts.emplace_back("same-run", store.run_dir(index.front().run_id) / "scenario.txt");
  } else {
    std::set<std::string> used;
    for (const auto& p : opt.scenarios) {
      std::string label = p.stem().string();
      for (std::size_t k = 2; used.count(label); ++k) label = p.stem().string() + "-" + std::to_string(k);
      used.insert(label);
      contexts.emplace_back(label, p);
    }
  }
  auto r = run_establo(runs, contexts, opt.filter, opt.stride, opt.seed.value_or(index.front().seed));
  emit_report(r, opt.out_dir);
  if (!opt.quiet) {
    out << "compendium: " << r.compendium.attackers.size() << " attackers, " << r.compendium.defenders.size()
        << " defenders\n";
    for (const auto& row : r.rankings) {
      auto text = [&](const std::string& id) {
        for (const auto& e : r.compendium.entries(row.role))
          if (e.id == id) return e.text;
        return std::string();
      };
      if (row.rank_meu == 1) out << row.context << " top " << to_string(row.role) << " by meu: " << row.id << " '" << text(row.id) << "'\n";
      if (row.rank_best_worst == 1) out << row.context << " top " << to_string(row.role) << " by best-worst: " << row.id << " '" << text(row.id) << "'\n";
      if (row.rank_combined == 1) out << row.context << " top " << to_string(row.role) << " by combined: " << row.id << " '" << text(row.id) << "'\n";
    }
    out << "report written to " << opt.out_dir.string() << '\n';
  }
  return r;
}

/// Text summary of one stored run.
inline void cmd_inspect(const std::string& store_root, const std::string& run_id, std::ostream& out) {
  ResultsStore store(resolve_store(store_root));
  if (!store.contains(run_id)) throw UnknownRun("unknown run '" + run_id + "' in store " + store.root().string());
  const auto dir = store.run_dir(run_id);
  const auto m = load_manifest(dir);
  const auto steps = load_generations(dir / "generations.jsonl");
  const auto cfg = config_from_json(m.at("config"));

  out << "run " << run_id << '\n'
      << "label " << m.at("label").get<std::string>() << '\n'
      << "environment " << m.at("environment").get<std::string>() << '\n'
      << "seed " << m.at("seed").get<std::uint64_t>() << '\n'
      << "attacker direction " << m.at("attacker_direction").get<std::string>() << '\n'
      << "structure " << cfg.structure.describe() << '\n'
      << "selection " << cfg.selection.describe() << '\n'
      << "aggregation " << to_string(cfg.aggregation) << '\n'
      << "population " << cfg.attackers << " attackers, " << cfg.defenders << " defenders\n";
  std::size_t completed = 0;
  for (const auto& s : steps) completed = std::max(completed, s.generation);
  out << "generations " << completed << " of " << cfg.generations << '\n';
  for (const char* role : {"best_attacker", "best_defender"}) {
    auto c = champion_from_json(m.at(role));
    out << (role == std::string("best_attacker") ? "best attacker" : "best defender") << " '" << c.sentence
        << "' fitness " << format_double(c.fitness) << " primary " << format_double(c.primary) << " cost "
        << format_double(c.cost) << '\n';
  }
  out << "trajectory generation attacker_best attacker_mean attacker_variance defender_best defender_mean "
         "defender_variance\n";
  for (std::size_t t = 1; t <= completed; ++t) {
    const HalfStep *a = nullptr, *d = nullptr;
    for (const auto& s : steps)
      if (s.generation == t) (s.role == Role::attacker ? a : d) = &s;
    if (!a || !d) throw CorruptRecord("generation " + std::to_string(t) + " is incomplete");
    out << t << ' ' << format_double(a->best_fitness) << ' ' << format_double(a->mean_fitness) << ' '
        << format_double(a->variance) << ' ' << format_double(d->best_fitness) << ' '
        << format_double(d->mean_fitness) << ' ' << format_double(d->variance) << '\n';
  }
}

/// Parses a grammar file and prints its shape.
inline void cmd_validate_grammar(const fs::path& path, std::ostream& out) {
  auto g = load_bnf(path.string());
  std::size_t alts = 0;
  for (std::size_t i = 0; i < g.nonterminal_count(); ++i) alts += g.alternatives(i).size();
  out << path.string() << ": ok, " << g.nonterminal_count() << " nonterminals, " << g.terminal_count()
      << " terminals, " << alts << " alternatives, start <" << g.nonterminal(0) << ">\n";
}

}  // namespace coevo
