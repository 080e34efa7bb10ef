#include "homoscale/rng.hpp"

#include <boost/random/seed_seq.hpp>

namespace homoscale {

namespace {
std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }
}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t substream)
    : seed_(master_seed), stream_(stream), substream_(substream) {
  boost::random::seed_seq seq{lo(master_seed), hi(master_seed), lo(stream), hi(stream),
                              lo(substream), hi(substream), 0x686f6d6fu};
  engine_.seed(seq);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace homoscale
