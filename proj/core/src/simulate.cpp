#include "qrrp/simulate.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace qrrp {

void SimSpec::validate() const {
  if (n < 2 || p < 1)
    throw Error(ErrorCode::invalid_argument, "SimSpec: need n >= 2 and p >= 1");
}

namespace {

// splitmix64 finalizer; the counter walks the golden-gamma sequence.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t index) {
  const std::uint64_t key = splitmix64(seed ^ (stream * 0xda942042e4dd58b5ULL));
  return splitmix64(key + index * 0x9e3779b97f4a7c15ULL);
}

// Stream layout: 0 coefficients, 1 design entries (row major), 2 errors.
enum : std::uint64_t { kStreamCoef = 0, kStreamDesign = 1, kStreamError = 2 };

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index) {
  return double(counter_bits(seed, stream, index) >> 11) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t index) {
  // One normal per index from a fixed pair of uniforms keeps the mapping
  // counter -> deviate stateless.
  const double u1 = counter_uniform(seed, stream, 2 * index);
  const double u2 = counter_uniform(seed, stream, 2 * index + 1);
  const double r = std::sqrt(-2.0 * std::log1p(u1 - 1.0 + 0x1.0p-53));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

Vector simulated_coefficients(const SimSpec& spec) {
  spec.validate();
  Vector coef(spec.p + 1);
  for (Index j = 0; j <= spec.p; ++j)
    coef(j) = counter_normal(spec.seed, kStreamCoef, std::uint64_t(j));
  return coef;
}

Dataset simulate(const SimSpec& spec) {
  spec.validate();
  const Vector coef = simulated_coefficients(spec);
  Dataset data;
  data.X.resize(spec.n, spec.p);
  for (Index i = 0; i < spec.n; ++i)
    for (Index j = 0; j < spec.p; ++j)
      data.X(i, j) = counter_normal(
          spec.seed, kStreamDesign,
          std::uint64_t(i) * std::uint64_t(spec.p) + std::uint64_t(j));
  data.y.resize(spec.n);
  for (Index i = 0; i < spec.n; ++i)
    data.y(i) = coef(0) + data.X.row(i).dot(coef.tail(spec.p)) +
                counter_normal(spec.seed, kStreamError, std::uint64_t(i));
  return data;
}

std::string simulation_metadata(const SimSpec& spec) {
  std::ostringstream os;
  os << "{\n"
     << "  \"generator\": \"" << kGeneratorName << "\",\n"
     << "  \"generator_version\": " << kGeneratorVersion << ",\n"
     << "  \"n\": " << spec.n << ",\n"
     << "  \"p\": " << spec.p << ",\n"
     << "  \"seed\": " << spec.seed << "\n"
     << "}\n";
  return os.str();
}

}  // namespace qrrp
