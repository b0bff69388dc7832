#pragma once

// Monte Carlo malware contagion in an enclave-segmented network.
//
// Topology file, one directive per line, '#' comments:
//   enclaves <size> <size> ...    device count per enclave (ids e0, e1, ...)
//   link <a> <b>                  undirected inter-enclave link
//   spread_rate <p>               per infected device per tick
//   cross_rate <p>                per link direction per tick
//   cleanse_duration <ticks>
//   mission_devices <count>
//   trials <n>
//   horizon <ticks>
//   base_duration <real>
//   device_delay <real>           per infected mission device per tick
//   cleanse_delay <real>          per cleanse of an enclave hosting mission devices
//
// Attack sentences: one or more plans
//   target e<i> strength <p> duration <ticks> count <n>
// Defense sentences:
//   place e<i> ... tap <p> ...    one enclave per mission device, one tap per enclave
//
// Every random event reads its own counter-keyed uniform (trial, tick, event,
// location), so trials are independent of evaluation order and runs with a
// different parameter reuse the same draws.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "coevo/environment.hpp"
#include "coevo/error.hpp"
#include "coevo/fitness.hpp"
#include "coevo/grammar.hpp"
#include "coevo/rng.hpp"

namespace coevo::contagion {

struct SegmentedNetwork {
  std::vector<std::size_t> enclaves;
  std::vector<std::pair<std::size_t, std::size_t>> links;
  double spread_rate = 0.0;
  double cross_rate = 0.0;
  std::size_t cleanse_duration = 1;
};

struct MonteCarloConfig {
  std::size_t trials = 1;
  std::size_t horizon = 1;
  double base_duration = 0.0;
  double device_delay = 1.0;
  double cleanse_delay = 0.0;
};

struct ContagionScenario {
  SegmentedNetwork network;
  MonteCarloConfig mc;
  std::size_t mission_devices = 1;

  void validate() const {
    const auto& n = network;
    if (n.enclaves.empty()) throw ScenarioError("no enclaves");
    for (auto s : n.enclaves)
      if (s < 1) throw ScenarioError("enclave sizes must be >= 1");
    for (auto [a, b] : n.links)
      if (a >= n.enclaves.size() || b >= n.enclaves.size() || a == b)
        throw ScenarioError("link references unknown enclave");
    if (!(n.spread_rate >= 0 && n.spread_rate <= 1)) throw ScenarioError("spread_rate must be in [0,1]");
    if (!(n.cross_rate >= 0 && n.cross_rate <= 1)) throw ScenarioError("cross_rate must be in [0,1]");
    if (mc.trials < 1) throw ScenarioError("trials must be >= 1");
    if (mc.horizon < 1) throw ScenarioError("horizon must be >= 1");
    if (mission_devices < 1) throw ScenarioError("mission_devices must be >= 1");
  }
};

inline ContagionScenario parse_scenario(std::string_view text) {
  ContagionScenario s;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ScenarioError("line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto read = [&](auto& v) {
      if (!(ls >> v)) fail("bad value for '" + key + "'");
    };
    if (key == "enclaves") {
      std::size_t sz;
      while (ls >> sz) s.network.enclaves.push_back(sz);
      if (!ls.eof()) fail("bad enclave size");
      continue;
    }
    if (key == "link") { std::size_t a, b; read(a); read(b); s.network.links.emplace_back(a, b); }
    else if (key == "spread_rate") read(s.network.spread_rate);
    else if (key == "cross_rate") read(s.network.cross_rate);
    else if (key == "cleanse_duration") read(s.network.cleanse_duration);
    else if (key == "mission_devices") read(s.mission_devices);
    else if (key == "trials") read(s.mc.trials);
    else if (key == "horizon") read(s.mc.horizon);
    else if (key == "base_duration") read(s.mc.base_duration);
    else if (key == "device_delay") read(s.mc.device_delay);
    else if (key == "cleanse_delay") read(s.mc.cleanse_delay);
    else fail("unknown directive '" + key + "'");
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
  }
  s.validate();
  return s;
}

inline ContagionScenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path + ": cannot open topology file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const Error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

struct AttackPlan {
  std::size_t enclave = 0;
  double strength = 0.0;
  std::size_t duration = 1;
  std::size_t count = 1;
};

struct ContagionAttack {
  std::vector<AttackPlan> plans;
};

struct ContagionDefense {
  std::vector<std::size_t> placement;  // mission device -> enclave
  std::vector<double> sensitivity;     // enclave -> tap sensitivity
};

/// Start tick of repetition r of a plan: repetitions are spread evenly over the horizon.
inline std::size_t repetition_start(std::size_t r, std::size_t count, std::size_t horizon) {
  return r * horizon / count;
}

namespace detail {

inline bool parse_index(std::string_view tok, char prefix, std::size_t& out) {
  if (tok.size() < 2 || tok[0] != prefix) return false;
  auto [p, ec] = std::from_chars(tok.data() + 1, tok.data() + tok.size(), out);
  return ec == std::errc{} && p == tok.data() + tok.size();
}

inline bool parse_real(const std::string& tok, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(tok, &used);
    return used == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_count(std::string_view tok, std::size_t& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return !tok.empty() && ec == std::errc{} && p == tok.data() + tok.size();
}

enum : std::uint64_t { ev_attack = 1, ev_attack_target, ev_spread, ev_spread_target, ev_cross,
                       ev_cross_target, ev_detect };

inline double event_uniform(std::uint64_t trial_key, std::size_t tick, std::uint64_t event,
                            std::size_t a, std::size_t b = 0) {
  return to_unit(derive_key(trial_key, {tick, event, a, b}));
}

inline std::size_t pick(double u, std::size_t n) { return std::min(n - 1, std::size_t(u * double(n))); }

}  // namespace detail

/// Per-trial trajectory summary.
struct TrialResult {
  double delay = 0.0;
  std::size_t detections = 0;
  std::size_t cleanses = 0;
  long first_infection_tick = -1;
  long first_cleanse_tick = -1;
};

class ContagionEnvironment {
 public:
  using Attack = ContagionAttack;
  using Defense = ContagionDefense;
  static constexpr bool concurrent_engage = true;

  explicit ContagionEnvironment(ContagionScenario s) : s_(std::move(s)) { s_.validate(); }

  const ContagionScenario& scenario() const noexcept { return s_; }
  /// The engine minimizes attacker_score = -delay.
  Direction attacker_direction() const noexcept { return Direction::minimize; }

  ContagionAttack interpret_attack(const Sentence& t) const {
    if (t.empty() || t.size() % 8 != 0) throw InterpretError("attack sentence is not a sequence of plans: '" + join(t) + "'");
    ContagionAttack a;
    const auto ne = s_.network.enclaves.size();
    for (std::size_t i = 0; i < t.size(); i += 8) {
      AttackPlan p;
      if (t[i] != "target" || !detail::parse_index(t[i + 1], 'e', p.enclave) || t[i + 2] != "strength" ||
          !detail::parse_real(t[i + 3], p.strength) || t[i + 4] != "duration" ||
          !detail::parse_count(t[i + 5], p.duration) || t[i + 6] != "count" ||
          !detail::parse_count(t[i + 7], p.count))
        throw InterpretError("not an attack plan: '" + join(Sentence(t.begin() + long(i), t.begin() + long(i) + 8)) + "'");
      p.enclave = std::min(p.enclave, ne - 1);
      p.strength = std::clamp(p.strength, 0.0, 1.0);
      p.duration = std::max<std::size_t>(p.duration, 1);
      p.count = std::max<std::size_t>(p.count, 1);
      a.plans.push_back(p);
    }
    return a;
  }

  ContagionDefense interpret_defense(const Sentence& t) const {
    auto bad = [&](const std::string& why) { return InterpretError("not a defense (" + why + "): '" + join(t) + "'"); };
    const auto ne = s_.network.enclaves.size();
    if (t.empty() || t[0] != "place") throw bad("expected 'place'");
    ContagionDefense d;
    std::size_t i = 1;
    for (; i < t.size() && t[i] != "tap"; ++i) {
      std::size_t e;
      if (!detail::parse_index(t[i], 'e', e)) throw bad("bad enclave token");
      d.placement.push_back(std::min(e, ne - 1));
    }
    if (d.placement.size() != s_.mission_devices) throw bad("expected " + std::to_string(s_.mission_devices) + " placements");
    if (i == t.size()) throw bad("expected 'tap'");
    for (++i; i < t.size(); ++i) {
      double v;
      if (!detail::parse_real(t[i], v)) throw bad("bad sensitivity");
      d.sensitivity.push_back(std::clamp(v, 0.0, 1.0));
    }
    if (d.sensitivity.size() != ne) throw bad("expected " + std::to_string(ne) + " sensitivities");
    return d;
  }

  /// One trial keyed by `trial_key`.
  TrialResult run_trial(const ContagionAttack& attack, const ContagionDefense& defense,
                        std::uint64_t trial_key) const {
    using namespace detail;
    const auto& net = s_.network;
    const auto ne = net.enclaves.size();
    const auto horizon = s_.mc.horizon;

    std::vector<std::vector<char>> infected(ne);
    std::vector<std::size_t> count(ne, 0);
    std::vector<std::size_t> online_at(ne, 0);
    for (std::size_t e = 0; e < ne; ++e) infected[e].assign(net.enclaves[e], 0);

    // Mission devices: enclave and device slot.
    std::vector<std::pair<std::size_t, std::size_t>> mission;
    std::vector<char> hosts_mission(ne, 0);
    {
      std::vector<std::size_t> used(ne, 0);
      for (auto e : defense.placement) {
        mission.emplace_back(e, used[e]++ % net.enclaves[e]);
        hosts_mission[e] = 1;
      }
    }

    auto infect = [&](std::size_t e, std::size_t dev) {
      if (!infected[e][dev]) { infected[e][dev] = 1; ++count[e]; }
    };

    TrialResult r;
    std::vector<std::size_t> snapshot;
    for (std::size_t tick = 0; tick < horizon; ++tick) {
      auto online = [&](std::size_t e) { return tick >= online_at[e]; };

      // (1) scheduled attacks
      for (std::size_t p = 0; p < attack.plans.size(); ++p) {
        const auto& plan = attack.plans[p];
        if (!online(plan.enclave)) continue;
        for (std::size_t rep = 0; rep < plan.count; ++rep) {
          auto start = repetition_start(rep, plan.count, horizon);
          if (tick < start || tick >= start + plan.duration) continue;
          if (event_uniform(trial_key, tick, ev_attack, p, rep) < plan.strength)
            infect(plan.enclave, pick(event_uniform(trial_key, tick, ev_attack_target, p, rep),
                                      net.enclaves[plan.enclave]));
        }
      }
      // (2) intra-enclave spread from devices infected before this step
      for (std::size_t e = 0; e < ne; ++e) {
        if (!online(e) || count[e] == 0) continue;
        snapshot.clear();
        for (std::size_t dev = 0; dev < infected[e].size(); ++dev)
          if (infected[e][dev]) snapshot.push_back(dev);
        for (auto dev : snapshot)
          if (event_uniform(trial_key, tick, ev_spread, e, dev) < net.spread_rate)
            infect(e, pick(event_uniform(trial_key, tick, ev_spread_target, e, dev), net.enclaves[e]));
      }
      // (3) cross-enclave seeding, evaluated on the post-spread state
      {
        std::vector<char> source(ne);
        for (std::size_t e = 0; e < ne; ++e) source[e] = online(e) && count[e] > 0;
        for (auto [a, b] : net.links) {
          for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
            if (!source[from] || !online(to)) continue;
            if (event_uniform(trial_key, tick, ev_cross, from, to) < net.cross_rate)
              infect(to, pick(event_uniform(trial_key, tick, ev_cross_target, from, to), net.enclaves[to]));
          }
        }
      }
      if (r.first_infection_tick < 0 &&
          std::any_of(count.begin(), count.end(), [](std::size_t c) { return c > 0; }))
        r.first_infection_tick = long(tick);
      // (4) detection and cleansing
      for (std::size_t e = 0; e < ne; ++e) {
        if (!online(e) || count[e] == 0) continue;
        const double p = defense.sensitivity[e] * double(count[e]) / double(net.enclaves[e]);
        if (event_uniform(trial_key, tick, ev_detect, e) < p) {
          ++r.detections;
          ++r.cleanses;
          if (r.first_cleanse_tick < 0) r.first_cleanse_tick = long(tick);
          std::fill(infected[e].begin(), infected[e].end(), 0);
          count[e] = 0;
          online_at[e] = tick + 1 + net.cleanse_duration;
          if (hosts_mission[e]) r.delay += s_.mc.cleanse_delay;
        }
      }
      // (5) delay from infected mission devices
      for (auto [e, dev] : mission)
        if (infected[e][dev]) r.delay += s_.mc.device_delay;

      for (std::size_t e = 0; e < ne; ++e)
        if (!online(e) && count[e] != 0) throw std::logic_error("offline enclave holds infections");
    }
    return r;
  }

  EngagementOutcome engage(const ContagionAttack& attack, const ContagionDefense& defense,
                           std::uint64_t key) const {
    const auto trials = s_.mc.trials;
    std::vector<double> delays, first_inf, first_cleanse;
    delays.reserve(trials);
    double detections = 0, cleanses = 0;
    for (std::size_t k = 0; k < trials; ++k) {
      auto r = run_trial(attack, defense, derive_key(key, {k}));
      delays.push_back(r.delay);
      first_inf.push_back(double(r.first_infection_tick));
      first_cleanse.push_back(double(r.first_cleanse_tick));
      detections += double(r.detections);
      cleanses += double(r.cleanses);
    }
    const double mean_delay = aggregate(delays, Aggregation::mean);

    double effort = 0.0;
    for (const auto& p : attack.plans)
      effort += p.strength * double(std::min(p.duration * p.count, s_.mc.horizon));
    const double effort_bound = double(s_.network.enclaves.size() * s_.mc.horizon);

    EngagementOutcome o;
    o.attacker_score = -mean_delay;
    o.defender_score = -mean_delay;
    o.costs["attacker_cost"] = std::min(1.0, effort / effort_bound);
    o.telemetry["mean_delay"] = mean_delay;
    o.telemetry["mission_duration"] = s_.mc.base_duration + mean_delay;
    o.telemetry["detections"] = detections / double(trials);
    o.telemetry["cleanses"] = cleanses / double(trials);
    o.series["delay"] = std::move(delays);
    o.series["first_infection_tick"] = std::move(first_inf);
    o.series["first_cleanse_tick"] = std::move(first_cleanse);
    return o;
  }

 private:
  ContagionScenario s_;
};

static_assert(Environment<ContagionEnvironment>);

/// Mean attacker score of one attack over several defenses (maximum expected
/// utility aggregation). keys[i] keys the engagement with defenses[i].
inline double estimate_meu(const ContagionEnvironment& env, const ContagionAttack& attack,
                           std::span<const ContagionDefense> defenses, std::span<const std::uint64_t> keys) {
  if (defenses.empty()) throw EmptyInput("estimate_meu needs at least one opponent");
  if (keys.size() != defenses.size()) throw DimensionMismatch("one key per opponent required");
  std::vector<double> scores;
  for (std::size_t i = 0; i < defenses.size(); ++i)
    scores.push_back(env.engage(attack, defenses[i], keys[i]).attacker_score);
  return aggregate(scores, Aggregation::mean);
}

/// Mean defender score of one defense over several attacks.
inline double estimate_meu(const ContagionEnvironment& env, std::span<const ContagionAttack> attacks,
                           const ContagionDefense& defense, std::span<const std::uint64_t> keys) {
  if (attacks.empty()) throw EmptyInput("estimate_meu needs at least one opponent");
  if (keys.size() != attacks.size()) throw DimensionMismatch("one key per opponent required");
  std::vector<double> scores;
  for (std::size_t i = 0; i < attacks.size(); ++i)
    scores.push_back(env.engage(attacks[i], defense, keys[i]).defender_score);
  return aggregate(scores, Aggregation::mean);
}

}  // namespace coevo::contagion
