#include "acw/seed.hpp"

namespace acw {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Seed Seed::child(std::initializer_list<std::uint64_t> path) const {
  Seed out = *this;
  out.stream_key.insert(out.stream_key.end(), path.begin(), path.end());
  return out;
}

std::uint64_t Seed::bits() const {
  std::uint64_t h = splitmix64(value);
  for (std::uint64_t k : stream_key) {
    // fold the key length in as well so {1} and {1, 0} differ
    h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  }
  return splitmix64(h ^ stream_key.size());
}

void to_json(nlohmann::json& j, const Seed& s) {
  j = nlohmann::json{{"value", s.value}, {"stream_key", s.stream_key}};
}

void from_json(const nlohmann::json& j, Seed& s) {
  if (j.is_number_unsigned() || j.is_number_integer()) {
    s = Seed(j.get<std::uint64_t>());
    return;
  }
  s.value = j.at("value").get<std::uint64_t>();
  s.stream_key = j.value("stream_key", std::vector<std::uint64_t>{});
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // rejection keeps the draw unbiased
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace acw
