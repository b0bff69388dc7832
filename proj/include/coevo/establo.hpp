#pragma once

// Post-hoc decision support over cached runs: compendium filtering, cross-run
// tournament, multi-criteria ranking, pure Nash detection and report files.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coevo/engine.hpp"
#include "coevo/environment.hpp"
#include "coevo/error.hpp"
#include "coevo/fitness.hpp"
#include "coevo/grammar.hpp"
#include "coevo/record_io.hpp"

namespace coevo {

/// A run as ESTABLO consumes it: manifest fields, per-generation summaries
/// and the grammars the run was evolved under.
struct StoredRun {
  std::string run_id;
  std::string label;
  std::string environment;
  Direction attacker_direction = Direction::minimize;
  MappingConfig mapping;
  std::vector<HalfStep> steps;
  Champion best_attacker;
  Champion best_defender;
  Grammar attack_grammar;
  Grammar defense_grammar;

  Direction direction(Role r) const { return r == Role::attacker ? attacker_direction : Direction::maximize; }
  const Grammar& grammar(Role r) const { return r == Role::attacker ? attack_grammar : defense_grammar; }
};

/// Loads a run directory written by the experiment runner.
inline StoredRun load_stored_run(const std::filesystem::path& dir) {
  StoredRun r;
  auto m = load_manifest(dir);
  try {
    r.run_id = m.at("run_id").get<std::string>();
    r.label = m.at("label").get<std::string>();
    r.environment = m.at("environment").get<std::string>();
    r.attacker_direction = parse_direction(m.at("attacker_direction").get<std::string>());
    r.mapping = config_from_json(m.at("config")).mapping;
    r.best_attacker = champion_from_json(m.at("best_attacker"));
    r.best_defender = champion_from_json(m.at("best_defender"));
  } catch (const json::exception& e) {
    throw CorruptRecord((dir / "manifest.json").string() + ": " + e.what());
  }
  r.steps = load_generations(dir / "generations.jsonl");
  r.attack_grammar = load_bnf((dir / "attack.bnf").string());
  r.defense_grammar = load_bnf((dir / "defense.bnf").string());
  return r;
}

enum class CompendiumFilter { best_per_generation, best_per_run, pareto_per_run };

inline std::string_view to_string(CompendiumFilter f) {
  switch (f) {
    case CompendiumFilter::best_per_generation: return "best-per-generation";
    case CompendiumFilter::best_per_run: return "best-per-run";
    case CompendiumFilter::pareto_per_run: return "pareto-per-run";
  }
  return "?";
}

inline std::optional<CompendiumFilter> parse_filter(std::string_view s) {
  for (auto f : {CompendiumFilter::best_per_generation, CompendiumFilter::best_per_run,
                 CompendiumFilter::pareto_per_run})
    if (to_string(f) == s) return f;
  return std::nullopt;
}

struct CompendiumEntry {
  std::string id;
  Genotype genotype;
  Sentence sentence;
  std::string text;
  Role role = Role::attacker;
  std::string run_id;
  std::string label;
  std::size_t generation = 0;
  double primary = 0.0;
  double cost = 0.0;
};

struct Compendium {
  std::string environment;
  Direction attacker_direction = Direction::minimize;
  std::vector<CompendiumEntry> attackers;
  std::vector<CompendiumEntry> defenders;

  const std::vector<CompendiumEntry>& entries(Role r) const { return r == Role::attacker ? attackers : defenders; }
};

namespace detail {

struct Candidate {
  Genotype genotype;
  std::string text;
  std::size_t generation;
  double primary, cost;
};

// Generations kept under `stride`, anchored at the last one.
inline bool keep_generation(std::size_t t, std::size_t last, std::size_t stride) {
  return t <= last && (last - t) % stride == 0;
}

inline std::vector<Candidate> per_generation(const StoredRun& run, Role role, std::size_t stride) {
  std::size_t last = 0;
  for (const auto& s : run.steps) last = std::max(last, s.generation);
  std::vector<Candidate> out;
  for (const auto& s : run.steps) {
    if (s.role != role || !keep_generation(s.generation, last, stride)) continue;
    if (!s.valid[s.best_index]) continue;
    out.push_back({s.population[s.best_index], s.sentences[s.best_index], s.generation, s.best_primary, s.best_cost});
  }
  return out;
}

}  // namespace detail

/// Applies `filter` per run and role, sub-samples generations by `stride`, and
/// keeps the earliest entry of every distinct sentence. Each genotype is
/// re-mapped under its run's grammar and must reproduce the recorded sentence.
inline Compendium build_compendium(const std::vector<StoredRun>& runs, CompendiumFilter filter,
                                   std::size_t stride = 5) {
  if (stride < 1) throw InvalidConfig("stride must be >= 1");
  Compendium c;
  if (!runs.empty()) {
    c.environment = runs.front().environment;
    c.attacker_direction = runs.front().attacker_direction;
  }
  std::set<std::string> seen[2];
  for (const auto& run : runs) {
    if (run.environment != c.environment)
      throw CorruptRecord("run " + run.run_id + " uses environment '" + run.environment + "', expected '" +
                          c.environment + "'");
    for (Role role : {Role::attacker, Role::defender}) {
      std::vector<detail::Candidate> cands;
      if (filter == CompendiumFilter::best_per_run) {
        const auto& ch = role == Role::attacker ? run.best_attacker : run.best_defender;
        std::size_t gen = 0;
        for (const auto& s : run.steps) gen = std::max(gen, s.generation);
        cands.push_back({ch.genotype, ch.sentence, gen, ch.primary, ch.cost});
      } else {
        cands = detail::per_generation(run, role, stride);
        if (filter == CompendiumFilter::pareto_per_run && !cands.empty()) {
          std::vector<std::vector<double>> pts;
          for (const auto& k : cands) pts.push_back({k.primary, k.cost});
          std::vector<detail::Candidate> front;
          for (auto i : pareto_front(pts, {run.direction(role), Direction::minimize})) front.push_back(cands[i]);
          cands = std::move(front);
        }
      }
      auto& out = role == Role::attacker ? c.attackers : c.defenders;
      for (auto& k : cands) {
        auto m = map_genotype(k.genotype, run.grammar(role), run.mapping);
        auto* st = std::get_if<Strategy>(&m);
        if (!st) {
          if (filter == CompendiumFilter::best_per_run) continue;  // champion never mapped
          throw GrammarMismatch("run " + run.run_id + " generation " + std::to_string(k.generation) + ": " +
                                std::string(to_string(role)) + " genotype does not map under the run grammar");
        }
        if (st->text() != k.text)
          throw GrammarMismatch("run " + run.run_id + " generation " + std::to_string(k.generation) + ": " +
                                std::string(to_string(role)) + " re-derives to '" + st->text() + "', recorded '" +
                                k.text + "'");
        if (!seen[int(role)].insert(k.text).second) continue;
        CompendiumEntry e;
        e.id = std::string(role == Role::attacker ? "A" : "D") + std::to_string(out.size());
        e.genotype = std::move(k.genotype);
        e.sentence = std::move(st->sentence);
        e.text = std::move(k.text);
        e.role = role;
        e.run_id = run.run_id;
        e.label = run.label;
        e.generation = k.generation;
        e.primary = k.primary;
        e.cost = k.cost;
        out.push_back(std::move(e));
      }
    }
  }
  return c;
}

/// Attacker scores of every attacker (rows) against every defender (columns).
struct PayoffMatrix {
  std::string context;
  Direction attacker_direction = Direction::minimize;
  std::vector<std::string> attackers;
  std::vector<std::string> defenders;
  std::vector<std::vector<double>> cells;

  std::size_t rows() const { return cells.size(); }
  std::size_t cols() const { return cells.empty() ? 0 : cells.front().size(); }
  Direction direction(Role r) const { return r == Role::attacker ? attacker_direction : opposite(attacker_direction); }

  void check() const {
    if (cells.empty() || cells.front().empty()) throw EmptyInput("payoff matrix is empty");
    for (const auto& row : cells)
      if (row.size() != cols()) throw DimensionMismatch("payoff matrix rows differ in length");
    if (attackers.size() != rows() || defenders.size() != cols())
      throw DimensionMismatch("payoff matrix labels do not match its shape");
  }
};

/// Engages every compendium attack with every defense. Cell (i, j) uses the
/// same key the engine would use for that sentence pair under `seed`.
template <Environment Env>
PayoffMatrix cross_tournament(const Compendium& c, const Env& env, std::uint64_t seed, std::string context,
                              std::size_t threads = 1) {
  using Attack = typename Env::Attack;
  using Defense = typename Env::Defense;
  std::vector<Attack> atts;
  std::vector<Defense> defs;
  for (const auto& e : c.attackers) atts.push_back(env.interpret_attack(e.sentence));
  for (const auto& e : c.defenders) defs.push_back(env.interpret_defense(e.sentence));

  PayoffMatrix m;
  m.context = std::move(context);
  m.attacker_direction = env.attacker_direction();
  for (const auto& e : c.attackers) m.attackers.push_back(e.id);
  for (const auto& e : c.defenders) m.defenders.push_back(e.id);
  m.cells.assign(atts.size(), std::vector<double>(defs.size()));
  const auto cols = defs.size();
  detail::parallel_for(atts.size() * cols, Env::concurrent_engage ? threads : 1, [&](std::size_t k) {
    const auto i = k / cols, j = k % cols;
    m.cells[i][j] = env.engage(atts[i], defs[j], engagement_key(seed, c.attackers[i].text, c.defenders[j].text))
                        .attacker_score;
  });
  return m;
}

struct RankingRow {
  std::string id;
  Role role = Role::attacker;
  std::string context;
  double meu = 0.0;
  double best_worst = 0.0;
  double combined = 0.0;
  std::size_t rank_meu = 0;
  std::size_t rank_best_worst = 0;
  std::size_t rank_combined = 0;
};

namespace detail {

// Scores closer than this fraction of the score span count as tied, so means
// that differ only by rounding rank the same before and after rescaling.
inline constexpr double tie_tolerance = 1e-9;

// Replaces each value by the smallest member of its run of near-equal values.
inline std::vector<double> snap_ties(const std::vector<double>& v) {
  if (v.empty()) return v;
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  const double tol = tie_tolerance * (v[order.back()] - v[order.front()]);
  std::vector<double> out(v.size());
  double anchor = v[order.front()], prev = anchor;
  for (auto i : order) {
    if (v[i] - prev > tol) anchor = v[i];
    prev = v[i];
    out[i] = anchor;
  }
  return out;
}

// 1-based ranks; better scores first, ties to the lower index.
inline std::vector<std::size_t> ranks(const std::vector<double>& raw, Direction d) {
  const auto v = snap_ties(raw);
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return better(v[a], v[b], d); });
  std::vector<std::size_t> r(v.size());
  for (std::size_t k = 0; k < order.size(); ++k) r[order[k]] = k + 1;
  return r;
}

}  // namespace detail

/// Ranks one role of a payoff matrix under MEU (mean over opponents),
/// best-worst (worst case over opponents) and the combined score, the mean of
/// the two normalized ranks (rank - 1) / (n - 1), lower is better.
inline std::vector<RankingRow> rank(const PayoffMatrix& m, Role role) {
  m.check();
  const Direction d = m.direction(role);
  const auto n = role == Role::attacker ? m.rows() : m.cols();
  const auto k = role == Role::attacker ? m.cols() : m.rows();
  std::vector<double> meu(n), worst(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(k);
    for (std::size_t j = 0; j < k; ++j) v[j] = role == Role::attacker ? m.cells[i][j] : m.cells[j][i];
    meu[i] = aggregate(v, Aggregation::mean);
    worst[i] = aggregate(v, d == Direction::maximize ? Aggregation::min : Aggregation::max);
  }
  const auto r_meu = detail::ranks(meu, d);
  const auto r_worst = detail::ranks(worst, d);
  std::vector<double> combined(n);
  for (std::size_t i = 0; i < n; ++i)
    combined[i] = n == 1 ? 0.0 : (double(r_meu[i] - 1) + double(r_worst[i] - 1)) / (2.0 * double(n - 1));
  const auto r_comb = detail::ranks(combined, Direction::minimize);

  std::vector<RankingRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    r.id = role == Role::attacker ? m.attackers[i] : m.defenders[i];
    r.role = role;
    r.context = m.context;
    r.meu = meu[i];
    r.best_worst = worst[i];
    r.combined = combined[i];
    r.rank_meu = r_meu[i];
    r.rank_best_worst = r_worst[i];
    r.rank_combined = r_comb[i];
  }
  return rows;
}

/// Cells where the attacker is a best response to the defender (column
/// optimum) and the defender a best response to the attacker (row optimum).
/// Ties count as best responses. Row-major order.
inline std::vector<std::pair<std::size_t, std::size_t>> pure_nash_pairs(const PayoffMatrix& m) {
  m.check();
  const Direction da = m.direction(Role::attacker), dd = m.direction(Role::defender);
  std::vector<double> col_best(m.cols()), row_best(m.rows());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    col_best[j] = m.cells[0][j];
    for (std::size_t i = 1; i < m.rows(); ++i)
      if (better(m.cells[i][j], col_best[j], da)) col_best[j] = m.cells[i][j];
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    row_best[i] = m.cells[i][0];
    for (std::size_t j = 1; j < m.cols(); ++j)
      if (better(m.cells[i][j], row_best[i], dd)) row_best[i] = m.cells[i][j];
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m.cells[i][j] == col_best[j] && m.cells[i][j] == row_best[i]) out.emplace_back(i, j);
  return out;
}

// ---- reports ----------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, p) : std::string("nan");
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Everything one ESTABLO pass produced, ready for emission.
struct EstabloResult {
  Compendium compendium;
  std::vector<PayoffMatrix> matrices;  // one per context
  std::vector<RankingRow> rankings;    // per context: attackers, then defenders
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> nash;  // per context
};

template <Environment Env>
void add_context(EstabloResult& r, const Env& env, std::uint64_t seed, std::string context, std::size_t threads = 1) {
  auto m = cross_tournament(r.compendium, env, seed, std::move(context), threads);
  for (Role role : {Role::attacker, Role::defender}) {
    auto rows = rank(m, role);
    r.rankings.insert(r.rankings.end(), rows.begin(), rows.end());
  }
  r.nash.push_back(pure_nash_pairs(m));
  r.matrices.push_back(std::move(m));
}

inline std::string context_file_name(std::string_view context) {
  std::string s;
  for (char c : context) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return "payoff_" + s + ".csv";
}

/// Writes rankings.csv, payoff_<context>.csv per context, plot_data.jsonl and
/// summary.txt into `out_dir`, creating it if needed.
inline void emit_report(const EstabloResult& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::map<std::string, const CompendiumEntry*> by_id;
  for (const auto* v : {&r.compendium.attackers, &r.compendium.defenders})
    for (const auto& e : *v) by_id[e.id] = &e;

  {
    auto out = detail::open_out(out_dir / "rankings.csv");
    out << "context,role,id,label,run_id,generation,sentence,meu,best_worst,combined,rank_meu,rank_best_worst,"
           "rank_combined\n";
    for (const auto& row : r.rankings) {
      const auto& e = *by_id.at(row.id);
      out << csv_field(row.context) << ',' << to_string(row.role) << ',' << csv_field(row.id) << ','
          << csv_field(e.label) << ',' << csv_field(e.run_id) << ',' << e.generation << ',' << csv_field(e.text)
          << ',' << format_double(row.meu) << ',' << format_double(row.best_worst) << ','
          << format_double(row.combined) << ',' << row.rank_meu << ',' << row.rank_best_worst << ','
          << row.rank_combined << '\n';
    }
  }

  for (const auto& m : r.matrices) {
    auto out = detail::open_out(out_dir / context_file_name(m.context));
    out << "attacker";
    for (const auto& d : m.defenders) out << ',' << csv_field(d);
    out << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
      out << csv_field(m.attackers[i]);
      for (double v : m.cells[i]) out << ',' << format_double(v);
      out << '\n';
    }
  }

  {
    // Sorted combined-score curves, one line per (context, source label).
    auto out = detail::open_out(out_dir / "plot_data.jsonl");
    for (const auto& m : r.matrices) {
      std::map<std::string, std::map<std::string, std::vector<const RankingRow*>>> groups;
      for (const auto& row : r.rankings)
        if (row.context == m.context)
          groups[by_id.at(row.id)->label][std::string(to_string(row.role))].push_back(&row);
      for (auto& [label, roles] : groups) {
        json line = {{"format_version", format_version}, {"context", m.context}, {"label", label},
                     {"score", "combined"}};
        for (auto& [role, rows] : roles) {
          std::stable_sort(rows.begin(), rows.end(),
                           [](const RankingRow* a, const RankingRow* b) { return a->rank_combined < b->rank_combined; });
          json ids = json::array(), ys = json::array();
          for (const auto* row : rows) {
            ids.push_back(row->id);
            ys.push_back(row->combined);
          }
          line[role] = {{"x", ids}, {"y", ys}};
        }
        out << line.dump() << '\n';
      }
    }
  }

  {
    auto out = detail::open_out(out_dir / "summary.txt");
    out << "environment: " << r.compendium.environment << '\n'
        << "compendium: " << r.compendium.attackers.size() << " attackers, " << r.compendium.defenders.size()
        << " defenders\n";
    for (std::size_t c = 0; c < r.matrices.size(); ++c) {
      const auto& m = r.matrices[c];
      out << "\ncontext " << m.context << '\n';
      for (Role role : {Role::attacker, Role::defender}) {
        const RankingRow *top_meu = nullptr, *top_bw = nullptr, *top_comb = nullptr;
        for (const auto& row : r.rankings) {
          if (row.context != m.context || row.role != role) continue;
          if (row.rank_meu == 1) top_meu = &row;
          if (row.rank_best_worst == 1) top_bw = &row;
          if (row.rank_combined == 1) top_comb = &row;
        }
        auto line = [&](const char* name, const RankingRow* row, double score) {
          out << "  top " << to_string(role) << " by " << name << ": " << row->id << " (" << format_double(score)
              << ") " << by_id.at(row->id)->text << '\n';
        };
        line("meu", top_meu, top_meu->meu);
        line("best-worst", top_bw, top_bw->best_worst);
        line("combined", top_comb, top_comb->combined);
      }
      out << "  pure nash pairs: " << r.nash[c].size() << '\n';
      for (auto [i, j] : r.nash[c])
        out << "    " << m.attackers[i] << " x " << m.defenders[j] << " (" << format_double(m.cells[i][j]) << ")\n";
    }
  }
}

}  // namespace coevo
