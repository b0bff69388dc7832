#pragma once

// Line-delimited JSON persistence of run records.
//
// A run directory holds
//   manifest.json       config echo, seed, file hashes, champions
//   engagements.jsonl   one line per engagement, in execution order
//   generations.jsonl   one line per half-generation
//   archive.jsonl       final archive contents, attackers first
// Every record carries "format_version".

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coevo/engine.hpp"
#include "coevo/error.hpp"

namespace coevo {

inline constexpr int format_version = 1;

using json = nlohmann::json;

// ---- enum spellings -------------------------------------------------------

inline Role parse_role(std::string_view s) {
  if (s == "attacker") return Role::attacker;
  if (s == "defender") return Role::defender;
  throw CorruptRecord("unknown role '" + std::string(s) + "'");
}

inline std::string_view to_string(Direction d) { return d == Direction::minimize ? "minimize" : "maximize"; }

inline Direction parse_direction(std::string_view s) {
  if (s == "minimize") return Direction::minimize;
  if (s == "maximize") return Direction::maximize;
  throw CorruptRecord("unknown direction '" + std::string(s) + "'");
}

inline std::optional<Aggregation> parse_aggregation(std::string_view s) {
  for (auto a : {Aggregation::mean, Aggregation::max, Aggregation::min, Aggregation::median})
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline std::optional<SolutionConcept> parse_solution(std::string_view s) {
  for (auto c : {SolutionConcept::meu, SolutionConcept::best_worst, SolutionConcept::pareto})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline std::string_view to_string(Archive::Admission a) {
  return a == Archive::Admission::pareto ? "pareto" : "best-of-generation";
}

inline std::optional<Archive::Admission> parse_admission(std::string_view s) {
  if (s == "pareto") return Archive::Admission::pareto;
  if (s == "best-of-generation") return Archive::Admission::best_of_generation;
  return std::nullopt;
}

inline std::string_view to_string(CodonPolicy p) {
  return p == CodonPolicy::consume_always ? "consume-always" : "consume-on-choice";
}

inline std::optional<CodonPolicy> parse_policy(std::string_view s) {
  if (s == "consume-always") return CodonPolicy::consume_always;
  if (s == "consume-on-choice") return CodonPolicy::consume_on_choice;
  return std::nullopt;
}

// ---- JSON conversions -----------------------------------------------------

inline void to_json(json& j, const Genotype& g) { j = g.codons; }
inline void from_json(const json& j, Genotype& g) { g.codons = j.get<std::vector<Codon>>(); }

inline json config_to_json(const EvolutionConfig& c) {
  json s = {{"kind", c.structure.describe().substr(0, c.structure.describe().find(':'))}};
  if (c.structure.kind == CompetitionStructure::Kind::tournament) s["rounds"] = c.structure.rounds;
  if (c.structure.kind == CompetitionStructure::Kind::spatial) {
    s["grid"] = c.structure.grid;
    s["window"] = c.structure.window;
  }
  json sel;
  if (c.selection.kind == SelectionScheme::Kind::tournament)
    sel = {{"kind", "tournament"}, {"size", c.selection.tournament_size}};
  else
    sel = {{"kind", "truncation"}, {"fraction", c.selection.fraction}};
  return {
      {"generations", c.generations},
      {"attackers", c.attackers},
      {"defenders", c.defenders},
      {"mutation", c.mutation},
      {"crossover", c.crossover},
      {"selection", sel},
      {"structure", s},
      {"aggregation", to_string(c.aggregation)},
      {"solution", to_string(c.solution)},
      {"archive_capacity", c.archive_capacity},
      {"archive_admission", to_string(c.archive_admission)},
      {"seed", c.seed},
      {"genotype", {{"min_len", c.genotype.min_len}, {"max_len", c.genotype.max_len},
                    {"codon_max", c.genotype.codon_max}}},
      {"mapping", {{"max_wraps", c.mapping.max_wraps}, {"policy", to_string(c.mapping.policy)},
                   {"max_derivation_steps", c.mapping.max_derivation_steps}}},
      {"secondary_weight", c.secondary_weight},
  };
}

inline EvolutionConfig config_from_json(const json& j) {
  EvolutionConfig c;
  try {
    c.generations = j.at("generations").get<std::size_t>();
    c.attackers = j.at("attackers").get<std::size_t>();
    c.defenders = j.at("defenders").get<std::size_t>();
    c.mutation = j.at("mutation").get<double>();
    c.crossover = j.at("crossover").get<double>();
    const auto& sel = j.at("selection");
    if (sel.at("kind") == "tournament") c.selection = SelectionScheme::tournament(sel.at("size").get<std::size_t>());
    else c.selection = SelectionScheme::truncation(sel.at("fraction").get<double>());
    const auto& s = j.at("structure");
    const auto kind = s.at("kind").get<std::string>();
    if (kind == "one-vs-one") c.structure = CompetitionStructure::one_vs_one();
    else if (kind == "all-vs-all") c.structure = CompetitionStructure::all_vs_all();
    else if (kind == "tournament") c.structure = CompetitionStructure::tournament(s.at("rounds").get<std::size_t>());
    else if (kind == "spatial")
      c.structure = CompetitionStructure::spatial(s.at("grid").get<std::size_t>(), s.at("window").get<std::size_t>());
    else throw CorruptRecord("unknown structure '" + kind + "'");
    auto agg = parse_aggregation(j.at("aggregation").get<std::string>());
    auto sol = parse_solution(j.at("solution").get<std::string>());
    auto adm = parse_admission(j.at("archive_admission").get<std::string>());
    auto pol = parse_policy(j.at("mapping").at("policy").get<std::string>());
    if (!agg || !sol || !adm || !pol) throw CorruptRecord("unknown enumeration value in config");
    c.aggregation = *agg;
    c.solution = *sol;
    c.archive_admission = *adm;
    c.mapping.policy = *pol;
    c.archive_capacity = j.at("archive_capacity").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.genotype.min_len = j.at("genotype").at("min_len").get<std::size_t>();
    c.genotype.max_len = j.at("genotype").at("max_len").get<std::size_t>();
    c.genotype.codon_max = j.at("genotype").at("codon_max").get<std::uint64_t>();
    c.mapping.max_wraps = j.at("mapping").at("max_wraps").get<std::size_t>();
    c.mapping.max_derivation_steps = j.at("mapping").at("max_derivation_steps").get<std::size_t>();
    c.secondary_weight = j.at("secondary_weight").get<double>();
  } catch (const json::exception& e) {
    throw CorruptRecord(std::string("config: ") + e.what());
  }
  return c;
}

inline json engagement_to_json(const EngagementRecord& r, const std::string& run_id) {
  const auto& o = r.outcome;
  return {
      {"format_version", format_version},
      {"run_id", run_id},
      {"generation", r.generation},
      {"phase", r.phase},
      {"attacker_id", o.attacker_id},
      {"defender_id", o.defender_id},
      {"attacker_genotype", r.attacker_genotype},
      {"defender_genotype", r.defender_genotype},
      {"attacker_sentence", r.attacker_sentence},
      {"defender_sentence", r.defender_sentence},
      {"attacker_score", o.attacker_score},
      {"defender_score", o.defender_score},
      {"costs", o.costs},
      {"telemetry", o.telemetry},
      {"series", o.series},
  };
}

inline EngagementRecord engagement_from_json(const json& j) {
  EngagementRecord r;
  r.generation = j.at("generation").get<std::size_t>();
  r.phase = j.at("phase").get<std::string>();
  r.attacker_genotype = j.at("attacker_genotype").get<Genotype>();
  r.defender_genotype = j.at("defender_genotype").get<Genotype>();
  r.attacker_sentence = j.at("attacker_sentence").get<std::string>();
  r.defender_sentence = j.at("defender_sentence").get<std::string>();
  auto& o = r.outcome;
  o.generation = r.generation;
  o.attacker_id = j.at("attacker_id").get<std::size_t>();
  o.defender_id = j.at("defender_id").get<std::size_t>();
  o.attacker_score = j.at("attacker_score").get<double>();
  o.defender_score = j.at("defender_score").get<double>();
  o.costs = j.at("costs").get<std::map<std::string, double>>();
  o.telemetry = j.at("telemetry").get<std::map<std::string, double>>();
  o.series = j.at("series").get<std::map<std::string, std::vector<double>>>();
  return r;
}

inline json step_to_json(const HalfStep& s, const std::string& run_id) {
  json j = {
      {"format_version", format_version},
      {"run_id", run_id},
      {"generation", s.generation},
      {"role", to_string(s.role)},
      {"best_index", s.best_index},
      {"best_fitness", s.best_fitness},
      {"best_primary", s.best_primary},
      {"best_cost", s.best_cost},
      {"mean_fitness", s.mean_fitness},
      {"variance", s.variance},
      {"invalid", s.invalid},
      {"engagements", s.engagements},
      {"population", s.population},
      {"sentences", s.sentences},
      {"valid", s.valid},
      {"fitness", s.fitness},
      {"incumbent", nullptr},
  };
  if (s.incumbent) {
    const auto& i = *s.incumbent;
    j["incumbent"] = {{"index", i.index},       {"genotype", i.genotype}, {"sentence", i.sentence},
                      {"fitness", i.fitness},   {"kept", i.kept},         {"replaced", i.replaced}};
  }
  return j;
}

inline HalfStep step_from_json(const json& j) {
  HalfStep s;
  s.generation = j.at("generation").get<std::size_t>();
  s.role = parse_role(j.at("role").get<std::string>());
  s.best_index = j.at("best_index").get<std::size_t>();
  s.best_fitness = j.at("best_fitness").get<double>();
  s.best_primary = j.at("best_primary").get<double>();
  s.best_cost = j.at("best_cost").get<double>();
  s.mean_fitness = j.at("mean_fitness").get<double>();
  s.variance = j.at("variance").get<double>();
  s.invalid = j.at("invalid").get<std::size_t>();
  s.engagements = j.at("engagements").get<std::size_t>();
  s.population = j.at("population").get<std::vector<Genotype>>();
  s.sentences = j.at("sentences").get<std::vector<std::string>>();
  s.valid = j.at("valid").get<std::vector<bool>>();
  s.fitness = j.at("fitness").get<std::vector<double>>();
  if (const auto& i = j.at("incumbent"); !i.is_null()) {
    Incumbent inc;
    inc.index = i.at("index").get<std::size_t>();
    inc.genotype = i.at("genotype").get<Genotype>();
    inc.sentence = i.at("sentence").get<std::string>();
    inc.fitness = i.at("fitness").get<double>();
    inc.kept = i.at("kept").get<bool>();
    inc.replaced = i.at("replaced").get<std::size_t>();
    s.incumbent = std::move(inc);
  }
  if (s.population.size() != s.fitness.size() || s.population.size() != s.valid.size() ||
      s.population.size() != s.sentences.size() || s.best_index >= s.population.size())
    throw CorruptRecord("generation record has inconsistent population arrays");
  return s;
}

inline json archive_entry_to_json(const ArchiveEntry& e, const std::string& run_id) {
  return {{"format_version", format_version}, {"run_id", run_id},        {"role", to_string(e.role)},
          {"generation", e.generation},       {"genotype", e.genotype},  {"sentence", e.sentence},
          {"fitness", e.fitness},             {"primary", e.primary},    {"cost", e.cost}};
}

inline ArchiveEntry archive_entry_from_json(const json& j) {
  ArchiveEntry e;
  e.role = parse_role(j.at("role").get<std::string>());
  e.generation = j.at("generation").get<std::size_t>();
  e.genotype = j.at("genotype").get<Genotype>();
  e.sentence = j.at("sentence").get<std::string>();
  e.fitness = j.at("fitness").get<double>();
  e.primary = j.at("primary").get<double>();
  e.cost = j.at("cost").get<double>();
  return e;
}

inline json champion_to_json(const Champion& c) {
  return {{"index", c.index},     {"genotype", c.genotype}, {"sentence", c.sentence},
          {"fitness", c.fitness}, {"primary", c.primary},   {"cost", c.cost}};
}

inline Champion champion_from_json(const json& j) {
  Champion c;
  c.index = j.at("index").get<std::size_t>();
  c.genotype = j.at("genotype").get<Genotype>();
  c.sentence = j.at("sentence").get<std::string>();
  c.fitness = j.at("fitness").get<double>();
  c.primary = j.at("primary").get<double>();
  c.cost = j.at("cost").get<double>();
  return c;
}

// ---- run directories ------------------------------------------------------

/// Provenance of a run, stored in its manifest next to the config echo.
struct RunMeta {
  std::string label = "alternating";
  std::string environment;
  std::string attack_grammar_hash;
  std::string defense_grammar_hash;
  std::string scenario_hash;
  std::string created_at;
};

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = digits[v & 15];
  return s;
}

inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a(bytes)); }

inline json manifest_to_json(const RunRecord& rec, const RunMeta& meta) {
  return {
      {"format_version", format_version},
      {"run_id", rec.run_id},
      {"label", meta.label},
      {"environment", meta.environment},
      {"seed", rec.config.seed},
      {"config", config_to_json(rec.config)},
      {"attacker_direction", to_string(rec.attacker_direction)},
      {"attack_grammar_hash", meta.attack_grammar_hash},
      {"defense_grammar_hash", meta.defense_grammar_hash},
      {"scenario_hash", meta.scenario_hash},
      {"created_at", meta.created_at},
      {"generations_completed", rec.config.generations},
      {"engagement_count", rec.engagements.size()},
      {"best_attacker", champion_to_json(rec.best_attacker)},
      {"best_defender", champion_to_json(rec.best_defender)},
      {"reported_attackers", rec.reported_attackers},
      {"reported_defenders", rec.reported_defenders},
  };
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(p.string() + ": cannot open for writing");
  return out;
}

inline void for_each_line(const std::filesystem::path& p, const std::function<void(const json&)>& f) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorruptRecord(p.string() + ": cannot open");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      if (j.value("format_version", -1) != format_version)
        throw CorruptRecord("unsupported format_version");
      f(j);
    } catch (const json::exception& e) {
      throw CorruptRecord(p.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const CorruptRecord& e) {
      throw CorruptRecord(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline void write_engagements(const std::filesystem::path& p, const RunRecord& rec) {
  auto out = detail::open_out(p);
  for (const auto& r : rec.engagements) out << engagement_to_json(r, rec.run_id).dump() << '\n';
}

inline void write_generations(const std::filesystem::path& p, const RunRecord& rec) {
  auto out = detail::open_out(p);
  for (const auto& s : rec.steps) out << step_to_json(s, rec.run_id).dump() << '\n';
}

inline void write_archive(const std::filesystem::path& p, const RunRecord& rec) {
  auto out = detail::open_out(p);
  for (const auto* a : {&rec.attacker_archive, &rec.defender_archive})
    for (const auto& e : a->entries()) out << archive_entry_to_json(e, rec.run_id).dump() << '\n';
}

/// Writes the four run files into `dir`, which must exist.
inline void write_run(const std::filesystem::path& dir, const RunRecord& rec, const RunMeta& meta) {
  detail::open_out(dir / "manifest.json") << manifest_to_json(rec, meta).dump(2) << '\n';
  write_engagements(dir / "engagements.jsonl", rec);
  write_generations(dir / "generations.jsonl", rec);
  write_archive(dir / "archive.jsonl", rec);
}

inline json load_manifest(const std::filesystem::path& dir) {
  const auto p = dir / "manifest.json";
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorruptRecord(p.string() + ": cannot open");
  try {
    auto j = json::parse(in);
    if (j.value("format_version", -1) != format_version) throw CorruptRecord(p.string() + ": unsupported format_version");
    for (const char* k : {"run_id", "label", "environment", "seed", "config", "attacker_direction",
                          "best_attacker", "best_defender"})
      if (!j.contains(k)) throw CorruptRecord(p.string() + ": missing field '" + k + "'");
    return j;
  } catch (const json::exception& e) {
    throw CorruptRecord(p.string() + ": " + e.what());
  }
}

inline std::vector<EngagementRecord> load_engagements(const std::filesystem::path& p) {
  std::vector<EngagementRecord> out;
  detail::for_each_line(p, [&](const json& j) { out.push_back(engagement_from_json(j)); });
  return out;
}

inline std::vector<HalfStep> load_generations(const std::filesystem::path& p) {
  std::vector<HalfStep> out;
  detail::for_each_line(p, [&](const json& j) { out.push_back(step_from_json(j)); });
  return out;
}

inline std::vector<ArchiveEntry> load_archive(const std::filesystem::path& p) {
  std::vector<ArchiveEntry> out;
  detail::for_each_line(p, [&](const json& j) { out.push_back(archive_entry_from_json(j)); });
  return out;
}

}  // namespace coevo
