#include "kql/rng.hpp"

#include <sstream>

namespace kql {

std::string Rng::save() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::load(const std::string& state) {
  std::istringstream is(state);
  is >> gen_;
  if (is.fail()) throw std::invalid_argument("Rng::load: malformed state string");
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer; distinct streams decorrelate even for seed deltas of 1.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace kql
