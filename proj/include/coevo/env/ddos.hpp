#pragma once

// Discrete-time P2P mission simulator under node-disabling (DDOS) attacks.
//
// Scenario file, one directive per line, '#' comments:
//   nodes <count>                 node ids are 0..count-1, tokens n0..n<count-1>
//   edge <u> <v>                  undirected
//   task <src> <dst> <start> <deadline> <required>
//   horizon <ticks>
//   budget <ticks>                bound on the sum of attack durations
//   message_cost <real>
//   node_cost <real>
//
// Attack sentences: zero or more clauses  disable n<i> at <tick> for <ticks>
// Defense sentences: route shortest-path | route flooding | route p2p-ring <k>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <deque>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coevo/environment.hpp"
#include "coevo/error.hpp"
#include "coevo/fitness.hpp"
#include "coevo/grammar.hpp"

namespace coevo::ddos {

struct Task {
  std::size_t source = 0;
  std::size_t destination = 0;
  std::size_t start = 0;
  std::size_t deadline = 0;
  std::size_t required = 1;
};

struct NetworkScenario {
  std::size_t nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<Task> mission;
  std::size_t horizon = 1;
  std::size_t budget = 1;
  double message_cost = 1.0;
  double node_cost = 0.0;

  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (auto [u, v] : edges) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }

  /// Throws ScenarioError if an invariant is violated.
  void validate() const {
    if (nodes == 0) throw ScenarioError("scenario has no nodes");
    if (horizon < 1) throw ScenarioError("horizon must be >= 1");
    if (budget < 1) throw ScenarioError("budget must be >= 1");
    for (auto [u, v] : edges)
      if (u >= nodes || v >= nodes) throw ScenarioError("edge references unknown node");
    for (const auto& t : mission) {
      if (t.source >= nodes || t.destination >= nodes) throw ScenarioError("task references unknown node");
      if (t.start > t.deadline || t.deadline > horizon) throw ScenarioError("task needs start <= deadline <= horizon");
      if (t.required < 1) throw ScenarioError("task requires >= 1 delivery");
    }
    if (mission.empty()) throw ScenarioError("scenario has no tasks");
    // Connected at t=0.
    auto adj = adjacency();
    std::vector<bool> seen(nodes, false);
    std::deque<std::size_t> q{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      for (auto v : adj[u])
        if (!seen[v]) { seen[v] = true; ++count; q.push_back(v); }
    }
    if (count != nodes) throw ScenarioError("network is not connected");
  }
};

inline NetworkScenario parse_scenario(std::string_view text) {
  NetworkScenario s;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool have_nodes = false;
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
    if (key == "nodes") { read(s.nodes); have_nodes = true; }
    else if (key == "edge") { std::size_t u, v; read(u); read(v); s.edges.emplace_back(u, v); }
    else if (key == "task") {
      Task t; read(t.source); read(t.destination); read(t.start); read(t.deadline); read(t.required);
      s.mission.push_back(t);
    }
    else if (key == "horizon") read(s.horizon);
    else if (key == "budget") read(s.budget);
    else if (key == "message_cost") read(s.message_cost);
    else if (key == "node_cost") read(s.node_cost);
    else fail("unknown directive '" + key + "'");
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
  }
  if (!have_nodes) throw ScenarioError("missing 'nodes' directive");
  s.validate();
  return s;
}

inline NetworkScenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path + ": cannot open scenario file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const Error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

struct Action {
  std::size_t target = 0;
  std::size_t start = 0;
  std::size_t duration = 1;
  friend bool operator==(const Action&, const Action&) = default;
};

struct DdosAttack {
  std::vector<Action> actions;
};

enum class Routing { shortest_path, flooding, p2p_ring };

struct DdosDefense {
  Routing routing = Routing::shortest_path;
  std::size_t successors = 1;  // p2p-ring only
};

namespace detail {

inline bool parse_uint(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

/// Nodes reachable from `src` over enabled nodes; empty if src is disabled.
inline std::vector<bool> reachable(const std::vector<std::vector<std::size_t>>& adj,
                                   const std::vector<bool>& disabled, std::size_t src) {
  std::vector<bool> seen(adj.size(), false);
  if (disabled[src]) return seen;
  std::deque<std::size_t> q{src};
  seen[src] = true;
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    for (auto v : adj[u])
      if (!disabled[v] && !seen[v]) { seen[v] = true; q.push_back(v); }
  }
  return seen;
}

/// BFS hop count from src to dst over enabled nodes, or -1.
inline long bfs_hops(const std::vector<std::vector<std::size_t>>& adj, const std::vector<bool>& disabled,
                     std::size_t src, std::size_t dst) {
  if (disabled[src] || disabled[dst]) return -1;
  std::vector<long> dist(adj.size(), -1);
  std::deque<std::size_t> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    if (u == dst) return dist[u];
    for (auto v : adj[u])
      if (!disabled[v] && dist[v] < 0) { dist[v] = dist[u] + 1; q.push_back(v); }
  }
  return -1;
}

/// Greedy clockwise hopping on the id-sorted ring with k successors. Each hop
/// goes to the farthest enabled successor that does not pass the destination.
inline long ring_hops(std::size_t n, std::size_t k, const std::vector<bool>& disabled,
                      std::size_t src, std::size_t dst) {
  if (disabled[src] || disabled[dst]) return -1;
  long hops = 0;
  std::size_t cur = src;
  while (cur != dst) {
    const std::size_t remaining = (dst + n - cur) % n;
    std::size_t step = std::min(k, remaining);
    while (step > 0 && disabled[(cur + step) % n]) --step;
    if (step == 0) return -1;
    cur = (cur + step) % n;
    ++hops;
  }
  return hops;
}

}  // namespace detail

/// The engagement environment. Pure: `engage` never consumes randomness.
class DdosEnvironment {
 public:
  using Attack = DdosAttack;
  using Defense = DdosDefense;
  static constexpr bool concurrent_engage = true;

  explicit DdosEnvironment(NetworkScenario scenario)
      : s_(std::move(scenario)), adj_(s_.adjacency()) {
    s_.validate();
  }

  const NetworkScenario& scenario() const noexcept { return s_; }
  Direction attacker_direction() const noexcept { return Direction::maximize; }

  /// Parse an attack sentence. Out-of-range nodes and ticks are clamped; the
  /// total duration is trimmed to the budget.
  DdosAttack interpret_attack(const Sentence& tokens) const {
    DdosAttack a;
    if (tokens.size() % 6 != 0) throw InterpretError("attack sentence is not a sequence of 6-token clauses: '" + join(tokens) + "'");
    std::size_t spent = 0;
    for (std::size_t i = 0; i < tokens.size(); i += 6) {
      std::size_t node, tick, dur;
      if (tokens[i] != "disable" || tokens[i + 1].size() < 2 || tokens[i + 1][0] != 'n' ||
          !detail::parse_uint(std::string_view(tokens[i + 1]).substr(1), node) || tokens[i + 2] != "at" ||
          !detail::parse_uint(tokens[i + 3], tick) || tokens[i + 4] != "for" ||
          !detail::parse_uint(tokens[i + 5], dur))
        throw InterpretError("not an attack clause: '" + join(Sentence(tokens.begin() + long(i), tokens.begin() + long(i) + 6)) + "'");
      Action act{std::min(node, s_.nodes - 1), std::min(tick, s_.horizon - 1), std::max<std::size_t>(dur, 1)};
      if (spent >= s_.budget) break;
      act.duration = std::min(act.duration, s_.budget - spent);
      spent += act.duration;
      a.actions.push_back(act);
    }
    return a;
  }

  DdosDefense interpret_defense(const Sentence& tokens) const {
    auto bad = [&] { return InterpretError("not a defense: '" + join(tokens) + "'"); };
    if (tokens.size() < 2 || tokens[0] != "route") throw bad();
    if (tokens[1] == "shortest-path" && tokens.size() == 2) return {Routing::shortest_path, 1};
    if (tokens[1] == "flooding" && tokens.size() == 2) return {Routing::flooding, 1};
    std::size_t k;
    if (tokens[1] == "p2p-ring" && tokens.size() == 3 && detail::parse_uint(tokens[2], k))
      return {Routing::p2p_ring, std::clamp<std::size_t>(k, 1, std::max<std::size_t>(1, s_.nodes - 1))};
    throw bad();
  }

  EngagementOutcome engage(const DdosAttack& attack, const DdosDefense& defense,
                           std::uint64_t /*key*/) const {
    const auto n = s_.nodes;
    std::vector<std::size_t> delivered(s_.mission.size(), 0);
    double traversals = 0.0;
    double attempts = 0.0;
    double failures = 0.0;
    double attempt_bound = 0.0;
    for (const auto& t : s_.mission) attempt_bound += double(t.deadline - t.start);

    std::vector<bool> disabled(n);
    for (std::size_t tick = 0; tick < s_.horizon; ++tick) {
      std::fill(disabled.begin(), disabled.end(), false);
      for (const auto& a : attack.actions)
        if (tick >= a.start && tick < a.start + a.duration) disabled[a.target] = true;

      for (std::size_t k = 0; k < s_.mission.size(); ++k) {
        const auto& task = s_.mission[k];
        if (tick < task.start || tick >= task.deadline || delivered[k] >= task.required) continue;
        attempts += 1.0;
        bool ok = false;
        switch (defense.routing) {
          case Routing::shortest_path: {
            auto h = detail::bfs_hops(adj_, disabled, task.source, task.destination);
            ok = h >= 0;
            if (ok) traversals += double(h);
            break;
          }
          case Routing::flooding: {
            auto seen = detail::reachable(adj_, disabled, task.source);
            ok = !disabled[task.destination] && seen[task.destination];
            for (auto [u, v] : s_.edges)
              if (seen[u] && seen[v]) traversals += 1.0;
            break;
          }
          case Routing::p2p_ring: {
            auto h = detail::ring_hops(n, defense.successors, disabled, task.source, task.destination);
            ok = h >= 0;
            if (ok) traversals += double(h);
            break;
          }
        }
        if (ok) ++delivered[k];
        else failures += 1.0;
      }
    }

    std::size_t completed = 0;
    for (std::size_t k = 0; k < s_.mission.size(); ++k)
      if (delivered[k] >= s_.mission[k].required) ++completed;

    double spent = 0.0;
    for (const auto& a : attack.actions) spent += double(a.duration);

    const double degree = defense.routing == Routing::p2p_ring ? double(defense.successors) : 1.0;
    const double upkeep = s_.node_cost * double(n) * double(s_.horizon);
    const double raw_cost = s_.message_cost * traversals + upkeep * degree;
    const double bound = s_.message_cost * double(s_.edges.size()) * attempt_bound +
                         upkeep * double(std::max<std::size_t>(1, n - 1));

    EngagementOutcome o;
    o.attacker_score = double(s_.mission.size() - completed) / double(s_.mission.size());
    o.defender_score = 1.0 - o.attacker_score;
    o.costs["attacker_cost"] = spent / double(s_.budget);
    o.costs["defender_cost"] = bound > 0.0 ? std::min(1.0, raw_cost / bound) : 0.0;
    o.telemetry["tasks_completed"] = double(completed);
    o.telemetry["attempts"] = attempts;
    o.telemetry["failed_attempts"] = failures;
    o.telemetry["traversals"] = traversals;
    return o;
  }

 private:
  NetworkScenario s_;
  std::vector<std::vector<std::size_t>> adj_;
};

static_assert(Environment<DdosEnvironment>);

}  // namespace coevo::ddos
