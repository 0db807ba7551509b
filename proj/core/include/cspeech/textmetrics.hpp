#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cspeech {

using TokenSequence = std::vector<std::string>;

/// Lowercases, splits on whitespace and strips leading/trailing ASCII
/// punctuation from every token; tokens left empty are dropped. Internal
/// punctuation ("don't") is kept.
TokenSequence tokenize(std::string_view text);

/// Sentence-level GLEU: with m the clipped n-gram matches summed over
/// n = 1..max_n, min(m / hyp n-grams, m / ref n-grams). 1 when both sequences
/// are empty, 0 when exactly one is.
double gleu(std::span<const std::string> hypothesis, std::span<const std::string> reference,
            std::size_t max_n = 4);

/// Suffix-stripping stemmer used by the second METEOR matching stage.
std::string light_stem(std::string_view token);

struct Alignment {
  std::size_t matches = 0;
  std::size_t exact_matches = 0;
  std::size_t chunks = 0;
  bool exact_search = true;  // false when the greedy fallback was used
};

/// One-to-one unigram alignment: exact matches first, then stem matches among
/// the rest; among maximal alignments the one with the fewest chunks.
Alignment align_unigrams(std::span<const std::string> hypothesis,
                         std::span<const std::string> reference);

/// METEOR without the synonym stage:
///   F = 10PR / (R + 9P), penalty = 0.5 (chunks / matches)^3, score = F (1 - penalty).
/// 0 when nothing matches.
double meteor_lite(std::span<const std::string> hypothesis,
                   std::span<const std::string> reference);

/// Jaccard similarity of the token sets; 1 when both are empty.
double jaccard(std::span<const std::string> a, std::span<const std::string> b);

/// 1 - max Jaccard similarity against the corpus. Throws on an empty corpus.
double novelty(std::span<const std::string> hypothesis, std::span<const TokenSequence> corpus);

/// Per-item 1 - max_{j != i} Jaccard(i, j).
std::vector<double> diversity_contributions(std::span<const TokenSequence> generated);

/// Mean of diversity_contributions. Throws with fewer than 2 items.
double diversity(std::span<const TokenSequence> generated);

/// Vowel groups (a e i o u y), minus one for a silent final "e" when another
/// group exists; at least 1.
std::size_t count_syllables(std::string_view word);

/// 206.835 - 1.015 (words / sentences) - 84.6 (syllables / words).
/// Sentences are non-empty segments between . ! ? (at least 1). Throws when
/// the text has no words.
double flesch_reading_ease(std::string_view text);

}  // namespace cspeech
