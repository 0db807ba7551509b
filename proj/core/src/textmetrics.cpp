#include "cspeech/textmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <unordered_map>

#include "cspeech/error.hpp"
#include "cspeech/text_util.hpp"

namespace cspeech {
namespace {

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

using NgramCounts = std::unordered_map<std::string, std::size_t>;

// Returns the total number of n-grams for n = 1..max_n.
std::size_t count_ngrams(std::span<const std::string> tokens, std::size_t max_n,
                         NgramCounts& counts) {
  std::size_t total = 0;
  for (std::size_t n = 1; n <= max_n && n <= tokens.size(); ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string key = std::to_string(n);
      for (std::size_t k = i; k < i + n; ++k) {
        key += '\x1f';
        key += tokens[k];
      }
      ++counts[key];
      ++total;
    }
  }
  return total;
}

// Exhaustive search over alignments with memoization on
// (hyp position, used reference positions, whether the previous hyp token was
// aligned to reference position j - 1). Gives up past a state budget.
class AlignmentSearch {
public:
  AlignmentSearch(std::span<const std::string> hyp, std::span<const std::string> ref)
      : hyp_(hyp), ref_(ref), weight_(static_cast<std::int64_t>(hyp.size()) + 1) {
    hyp_stems_.reserve(hyp.size());
    ref_stems_.reserve(ref.size());
    for (const auto& t : hyp) hyp_stems_.push_back(light_stem(t));
    for (const auto& t : ref) ref_stems_.push_back(light_stem(t));
  }

  std::optional<Alignment> run() {
    if (hyp_.size() > 200 || ref_.size() > 64) return std::nullopt;
    const auto best = solve(0, 0, kNone);
    if (!best) return std::nullopt;
    // Reconstruct the alignment by replaying the memoized decisions.
    Alignment a;
    std::uint64_t mask = 0;
    std::size_t prev = kNone;
    for (std::size_t i = 0; i < hyp_.size(); ++i) {
      const auto target = *solve(i, mask, prev);
      std::size_t chosen = kNone;
      for (std::size_t j = 0; j < ref_.size(); ++j) {
        if ((mask >> j) & 1U) continue;
        const auto gain = pair_gain(i, j, prev);
        if (!gain) continue;
        const auto rest = solve(i + 1, mask | (std::uint64_t{1} << j), j);
        if (rest && *gain + *rest == target) {
          chosen = j;
          break;
        }
      }
      if (chosen == kNone) {
        prev = kNone;
        continue;
      }
      ++a.matches;
      if (hyp_[i] == ref_[chosen]) ++a.exact_matches;
      if (!(prev != kNone && chosen == prev + 1)) ++a.chunks;
      mask |= std::uint64_t{1} << chosen;
      prev = chosen;
    }
    return a;
  }

private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  static constexpr std::size_t kStateBudget = std::size_t{1} << 18;

  struct Key {
    std::uint64_t mask;
    std::uint32_t i;
    std::uint32_t prev;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<std::uint64_t>{}(k.mask * 0x9e3779b97f4a7c15ULL ^
                                        (std::uint64_t{k.i} << 32 | k.prev));
    }
  };

  // Lexicographic (exact, total, continuation) packed into one integer.
  std::optional<std::int64_t> pair_gain(std::size_t i, std::size_t j, std::size_t prev) const {
    const bool exact = hyp_[i] == ref_[j];
    if (!exact && hyp_stems_[i] != ref_stems_[j]) return std::nullopt;
    const bool cont = prev != kNone && j == prev + 1;
    return (exact ? weight_ * weight_ : 0) + weight_ + (cont ? 1 : 0);
  }

  std::optional<std::int64_t> solve(std::size_t i, std::uint64_t mask, std::size_t prev) {
    if (i == hyp_.size()) return 0;
    const Key key{mask, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(prev)};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (memo_.size() >= kStateBudget) return std::nullopt;

    // Leaving hyp token i unaligned.
    auto best = solve(i + 1, mask, kNone);
    if (!best) return std::nullopt;
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      if ((mask >> j) & 1U) continue;
      const auto gain = pair_gain(i, j, prev);
      if (!gain) continue;
      const auto rest = solve(i + 1, mask | (std::uint64_t{1} << j), j);
      if (!rest) return std::nullopt;
      best = std::max(*best, *gain + *rest);
    }
    memo_.emplace(key, *best);
    return best;
  }

  std::span<const std::string> hyp_;
  std::span<const std::string> ref_;
  std::vector<std::string> hyp_stems_;
  std::vector<std::string> ref_stems_;
  std::int64_t weight_;
  std::unordered_map<Key, std::int64_t, KeyHash> memo_;
};

// Two-stage greedy: exact matches, then stem matches, each preferring the
// reference position that extends the previous hyp token's chunk.
Alignment greedy_alignment(std::span<const std::string> hyp, std::span<const std::string> ref) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> align(hyp.size(), kNone);
  std::vector<bool> used(ref.size(), false);
  std::vector<std::string> hyp_stems;
  std::vector<std::string> ref_stems;
  for (const auto& t : hyp) hyp_stems.push_back(light_stem(t));
  for (const auto& t : ref) ref_stems.push_back(light_stem(t));

  for (int stage = 0; stage < 2; ++stage) {
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      if (align[i] != kNone) continue;
      auto ok = [&](std::size_t j) {
        if (used[j]) return false;
        return stage == 0 ? hyp[i] == ref[j] : hyp_stems[i] == ref_stems[j];
      };
      std::size_t pick = kNone;
      if (i > 0 && align[i - 1] != kNone && align[i - 1] + 1 < ref.size() && ok(align[i - 1] + 1)) {
        pick = align[i - 1] + 1;
      } else {
        for (std::size_t j = 0; j < ref.size(); ++j) {
          if (ok(j)) {
            pick = j;
            break;
          }
        }
      }
      if (pick != kNone) {
        align[i] = pick;
        used[pick] = true;
      }
    }
  }

  Alignment a;
  a.exact_search = false;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (align[i] == kNone) continue;
    ++a.matches;
    if (hyp[i] == ref[align[i]]) ++a.exact_matches;
    if (!(i > 0 && align[i - 1] != kNone && align[i] == align[i - 1] + 1)) ++a.chunks;
  }
  return a;
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  for (const auto& raw : split_whitespace(text)) {
    std::size_t b = 0;
    std::size_t e = raw.size();
    while (b < e && is_punct(raw[b])) ++b;
    while (e > b && is_punct(raw[e - 1])) --e;
    if (e > b) out.push_back(to_lower_ascii(std::string_view(raw).substr(b, e - b)));
  }
  return out;
}

double gleu(std::span<const std::string> hypothesis, std::span<const std::string> reference,
            std::size_t max_n) {
  if (hypothesis.empty() && reference.empty()) return 1.0;
  if (hypothesis.empty() || reference.empty()) return 0.0;
  NgramCounts hyp_counts;
  NgramCounts ref_counts;
  const std::size_t hyp_total = count_ngrams(hypothesis, max_n, hyp_counts);
  const std::size_t ref_total = count_ngrams(reference, max_n, ref_counts);
  if (hyp_total == 0 || ref_total == 0) return 0.0;
  std::size_t matches = 0;
  for (const auto& [gram, count] : hyp_counts) {
    if (auto it = ref_counts.find(gram); it != ref_counts.end()) {
      matches += std::min(count, it->second);
    }
  }
  const double precision = static_cast<double>(matches) / static_cast<double>(hyp_total);
  const double recall = static_cast<double>(matches) / static_cast<double>(ref_total);
  return std::min(precision, recall);
}

std::string light_stem(std::string_view token) {
  static constexpr std::string_view kSuffixes[] = {"ing", "ed", "es", "s"};
  for (std::string_view suffix : kSuffixes) {
    if (token.size() >= suffix.size() + 3 && token.ends_with(suffix)) {
      if (suffix == "s" && token.ends_with("ss")) continue;
      return std::string(token.substr(0, token.size() - suffix.size()));
    }
  }
  return std::string(token);
}

Alignment align_unigrams(std::span<const std::string> hypothesis,
                         std::span<const std::string> reference) {
  if (hypothesis.empty() || reference.empty()) return Alignment{};
  if (auto exact = AlignmentSearch(hypothesis, reference).run()) return *exact;
  return greedy_alignment(hypothesis, reference);
}

double meteor_lite(std::span<const std::string> hypothesis,
                   std::span<const std::string> reference) {
  const Alignment a = align_unigrams(hypothesis, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double precision = m / static_cast<double>(hypothesis.size());
  const double recall = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double novelty(std::span<const std::string> hypothesis, std::span<const TokenSequence> corpus) {
  if (corpus.empty()) throw InvalidArgument("novelty: empty corpus");
  double best = 0.0;
  for (const auto& item : corpus) best = std::max(best, jaccard(hypothesis, item));
  return 1.0 - best;
}

std::vector<double> diversity_contributions(std::span<const TokenSequence> generated) {
  if (generated.size() < 2) throw InvalidArgument("diversity: need at least 2 items");
  std::vector<double> out(generated.size());
  for (std::size_t i = 0; i < generated.size(); ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < generated.size(); ++j) {
      if (j != i) best = std::max(best, jaccard(generated[i], generated[j]));
    }
    out[i] = 1.0 - best;
  }
  return out;
}

double diversity(std::span<const TokenSequence> generated) {
  const auto contrib = diversity_contributions(generated);
  double sum = 0.0;
  for (double c : contrib) sum += c;
  return sum / static_cast<double>(contrib.size());
}

std::size_t count_syllables(std::string_view word) {
  const std::string w = to_lower_ascii(word);
  auto is_vowel = [](char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
  };
  std::size_t groups = 0;
  bool in_group = false;
  for (char c : w) {
    const bool v = is_vowel(c);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  // A final "e" that forms its own group is silent when it is not the only group.
  if (w.size() >= 2 && w.back() == 'e' && !is_vowel(w[w.size() - 2]) && groups > 1) --groups;
  return std::max<std::size_t>(groups, 1);
}

double flesch_reading_ease(std::string_view text) {
  std::size_t words = 0;
  std::size_t syllables = 0;
  std::size_t sentences = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find_first_of(".!?", start);
    const auto segment =
        text.substr(start, end == std::string_view::npos ? text.size() - start : end - start);
    const auto tokens = tokenize(segment);
    if (!tokens.empty()) {
      ++sentences;
      words += tokens.size();
      for (const auto& t : tokens) syllables += count_syllables(t);
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  if (words == 0) throw InvalidArgument("flesch_reading_ease: text has no words");
  sentences = std::max<std::size_t>(sentences, 1);
  const double w = static_cast<double>(words);
  return 206.835 - 1.015 * (w / static_cast<double>(sentences)) -
         84.6 * (static_cast<double>(syllables) / w);
}

}  // namespace cspeech
