#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace kgnn {

using Rng = std::mt19937_64;

// Derives an independent stream from a list of 64-bit words, e.g. {seed, epoch, batch}.
inline Rng make_rng(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> seq;
  seq.reserve(words.size() * 2);
  for (auto w : words) {
    seq.push_back(static_cast<std::uint32_t>(w));
    seq.push_back(static_cast<std::uint32_t>(w >> 32));
  }
  std::seed_seq ss(seq.begin(), seq.end());
  return Rng(ss);
}

}  // namespace kgnn
