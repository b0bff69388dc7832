#pragma once

#include <concepts>
#include <cstdint>
#include <string_view>

#include "coevo/fitness.hpp"
#include "coevo/grammar.hpp"
#include "coevo/rng.hpp"

namespace coevo {

/// An engagement environment turns attack and defense sentences into structured
/// strategies and scores one attack against one defense.
///
/// `engage` receives a 64-bit key; stochastic environments derive all their
/// randomness from it. `concurrent_engage` declares whether `engage` may be
/// called from several threads at once.
template <class E>
concept Environment = requires(const E& env, const Sentence& s, const typename E::Attack& a,
                               const typename E::Defense& d, std::uint64_t key) {
  { env.interpret_attack(s) } -> std::same_as<typename E::Attack>;
  { env.interpret_defense(s) } -> std::same_as<typename E::Defense>;
  { env.engage(a, d, key) } -> std::same_as<EngagementOutcome>;
  { env.attacker_direction() } -> std::same_as<Direction>;
  { E::concurrent_engage } -> std::convertible_to<bool>;
};

/// Key of the engagement between two phenotypes under a run seed. Identical
/// sentence pairs always meet under the same randomness within one seed.
inline std::uint64_t engagement_key(std::uint64_t seed, std::string_view attack,
                                    std::string_view defense) {
  return derive_key(seed, {fnv1a(attack), fnv1a(defense)});
}

}  // namespace coevo
