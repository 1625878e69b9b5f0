#pragma once

#include <string>
#include <vector>

namespace tsx {

/// Lowercase, then split on whitespace and punctuation. A token is a maximal
/// run of alphanumeric characters (apostrophes are dropped, digits kept).
std::vector<std::string> tokenize(const std::string& text);

/// Geometric mean of clipped 1..4-gram precisions times the brevity penalty.
/// When a clipped count is zero for n >= 2, that precision gets +1 to both
/// numerator and denominator.
double bleu4(const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references);

struct RougeL {
  double precision;
  double recall;
  double f1;
};

/// Longest-common-subsequence overlap: recall = LCS/|ref|,
/// precision = LCS/|cand|, F1 their harmonic mean.
RougeL rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference);

/// Vowel-group syllable count with a silent-e rule; minimum one per word.
int count_syllables(const std::string& word);

/// 0.39*(words/sentences) + 11.8*(syllables/words) - 15.59. Sentences are
/// delimited by '.', '!', '?'; text without a terminator counts as one.
double flesch_kincaid(const std::string& text);

}  // namespace tsx
