#pragma once

// Slow, obviously-correct reference implementations used to check the library.

#include <cstddef>
#include <string>
#include <vector>

#include "cspeech/types.hpp"

namespace oracle {

using Tokens = std::vector<std::string>;

/// Enumerates every n-gram as a token vector and counts clipped matches by
/// linear scans.
double gleu(const Tokens& hyp, const Tokens& ref, std::size_t max_n = 4);

struct AlignmentScore {
  std::size_t exact = 0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Tries every one-to-one alignment whose links join equal tokens or tokens
/// with equal stems, keeping the most exact links, then the most links, then
/// the fewest chunks.
AlignmentScore best_alignment(const Tokens& hyp, const Tokens& ref);
double meteor(const Tokens& hyp, const Tokens& ref);

double jaccard(const Tokens& a, const Tokens& b);
double novelty(const Tokens& hyp, const std::vector<Tokens>& corpus);
double diversity(const std::vector<Tokens>& items);

/// Number of distributions whose largest mass sits on the intended type, with
/// exact ties resolved towards the alphabetically first type name.
std::size_t type_hits(const std::vector<cspeech::TypeDistribution>& dists,
                      cspeech::CsType intended);

}  // namespace oracle
