#pragma once

#include <cstdint>
#include <string>

#include "qrrp/types.hpp"

namespace qrrp {

// Counter-based generator identification, recorded in simulation metadata so
// fixtures stay reproducible across builds.
inline constexpr const char* kGeneratorName = "splitmix64-boxmuller";
inline constexpr int kGeneratorVersion = 1;

struct SimSpec {
  Index n = 0;
  Index p = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Stateless counter-based uniform in [0,1): splitmix64 finalizer applied to
/// seed and a (stream, index) counter.
double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index);

/// Standard normal deviate derived from two counter uniforms (Box-Muller).
double counter_normal(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t index);

/// Standard linear model y = beta0 + X beta + eps with X entries,
/// coefficients and errors all i.i.d. standard normal. Identical spec gives
/// a bit-identical dataset.
Dataset simulate(const SimSpec& spec);

/// The coefficients the generator drew for this spec (beta0, beta_1..p).
Vector simulated_coefficients(const SimSpec& spec);

/// Structured metadata sidecar (JSON text) carrying the spec and generator
/// version.
std::string simulation_metadata(const SimSpec& spec);

}  // namespace qrrp
