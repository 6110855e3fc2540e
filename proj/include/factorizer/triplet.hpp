#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace factorizer {

/// One index per codebook (the R, G and B channels).
struct Triplet {
  std::uint16_t r = 0;
  std::uint16_t g = 0;
  std::uint16_t b = 0;

  std::uint16_t operator[](int channel) const { return channel == 0 ? r : channel == 1 ? g : b; }

  std::string to_string() const {
    return std::to_string(r) + "," + std::to_string(g) + "," + std::to_string(b);
  }

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

inline Triplet make_triplet(const std::array<int, 3>& indices) {
  return {static_cast<std::uint16_t>(indices[0]), static_cast<std::uint16_t>(indices[1]),
          static_cast<std::uint16_t>(indices[2])};
}

struct TripletHash {
  std::size_t operator()(const Triplet& t) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{t.r} << 32) | (std::uint64_t{t.g} << 16) | t.b);
  }
};

}  // namespace factorizer
