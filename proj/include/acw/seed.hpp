#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

namespace acw {

/// Splittable seed: a root value plus the derivation path that led here.
/// Identical (value, stream_key) pairs always produce identical streams.
struct Seed {
  std::uint64_t value = 0;
  std::vector<std::uint64_t> stream_key;

  Seed() = default;
  explicit Seed(std::uint64_t v) : value(v) {}
  Seed(std::uint64_t v, std::vector<std::uint64_t> key) : value(v), stream_key(std::move(key)) {}

  /// Child seed with `path` appended to the stream key.
  [[nodiscard]] Seed child(std::initializer_list<std::uint64_t> path) const;

  /// 64 mixed bits identifying this stream.
  [[nodiscard]] std::uint64_t bits() const;

  bool operator==(const Seed&) const = default;
};

void to_json(nlohmann::json& j, const Seed& s);
void from_json(const nlohmann::json& j, Seed& s);

/// Counter-based stream over a Seed. Not thread-shared; cheap to create.
class Rng {
 public:
  explicit Rng(const Seed& seed) : state_(seed.bits()) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace acw
