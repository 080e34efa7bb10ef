#pragma once

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cstdint>

namespace homoscale {

// Random stream addressed by (master seed, stream index, substream).
// The engine state is derived from all three through a seed sequence, so
// identical addresses replay identical draws and distinct addresses give
// independent sequences.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t substream = 0);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  void fill_normal(double* out, std::size_t n, double scale = 1.0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = scale * normal_(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t substream() const { return substream_; }

 private:
  std::uint64_t seed_, stream_, substream_;
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
  boost::random::uniform_01<double> uniform_;
};

// Derives a child master seed; used to give the two sides of a comparison
// independent noise.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace homoscale
