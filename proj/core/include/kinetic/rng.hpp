#pragma once

#include <array>
#include <cstdint>

#include "kinetic/linalg.hpp"

namespace kinetic {

// Philox4x32-10 counter-based generator. Output is a pure function of
// (seed, stream, block index), so any particle or sample can draw its
// randomness independently of evaluation order and thread count.
namespace philox {
std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t counter);
}

// Mixes an index tuple into a 64-bit stream id (FNV-1a). Distinct tuples give
// distinct streams for all practical purposes; collisions would only correlate
// two substreams, not bias any single one.
std::uint64_t stream_id(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

class Substream {
 public:
  Substream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on (0,1), 53-bit mantissa, never returns 0 or 1.
  double uniform();

  double normal();  // standard normal, Box-Muller with cached spare
  Vec3 normal3();

  // Poisson draw; product method below mean 10, PTRS transformed rejection
  // above. Valid for mean up to ~1e18.
  std::uint64_t poisson(double mean);

 private:
  std::uint64_t seed_, stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace kinetic
