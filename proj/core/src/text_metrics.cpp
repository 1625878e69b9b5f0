#include "tsxplain/text_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tsx {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const std::vector<std::string>& toks, int n) {
  NgramCounts counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                      toks.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

double bleu4(const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references) {
  if (candidate.empty()) throw std::invalid_argument("bleu: empty candidate");
  if (references.empty()) throw std::invalid_argument("bleu: no references");

  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    NgramCounts cand = ngrams(candidate, n);
    int total = 0;
    for (const auto& [g, c] : cand) total += c;
    if (total == 0) {
      // candidate shorter than n: no evidence either way, precision 1
      continue;
    }
    NgramCounts max_ref;
    for (const auto& ref : references) {
      NgramCounts rc = ngrams(ref, n);
      for (const auto& [g, c] : rc)
        max_ref[g] = std::max(max_ref[g], c);
    }
    int clipped = 0;
    for (const auto& [g, c] : cand) {
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    double p;
    if (clipped == 0 && n >= 2)
      p = 1.0 / (total + 1.0);
    else if (clipped == 0)
      return 0.0;
    else
      p = static_cast<double>(clipped) / total;
    log_sum += 0.25 * std::log(p);
  }

  // brevity penalty against the closest reference length (shorter on ties)
  const size_t clen = candidate.size();
  size_t rlen = references[0].size();
  for (const auto& ref : references) {
    const auto d = [&](size_t l) {
      return l > clen ? l - clen : clen - l;
    };
    if (d(ref.size()) < d(rlen) || (d(ref.size()) == d(rlen) && ref.size() < rlen))
      rlen = ref.size();
  }
  const double bp = clen >= rlen
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(rlen) / clen);
  return bp * std::exp(log_sum);
}

RougeL rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty())
    throw std::invalid_argument("rouge: empty input");
  const size_t n = candidate.size(), m = reference.size();
  std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j)
      cur[j] = candidate[i - 1] == reference[j - 1]
                   ? prev[j - 1] + 1
                   : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[m]);
  RougeL r;
  r.precision = lcs / static_cast<double>(n);
  r.recall = lcs / static_cast<double>(m);
  r.f1 = lcs == 0.0 ? 0.0
                    : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

int count_syllables(const std::string& word) {
  std::string w;
  for (unsigned char c : word)
    if (std::isalpha(c)) w += static_cast<char>(std::tolower(c));
  if (w.empty()) return 0;
  auto is_vowel = [](char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
  };
  int groups = 0;
  bool in_group = false;
  for (char c : w) {
    if (is_vowel(c)) {
      if (!in_group) ++groups;
      in_group = true;
    } else {
      in_group = false;
    }
  }
  // silent trailing e, except the consonant-le ending ("turtle")
  const size_t n = w.size();
  if (groups > 1 && n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) &&
      !(n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3])))
    --groups;
  return std::max(1, groups);
}

double flesch_kincaid(const std::string& text) {
  const auto words = tokenize(text);
  if (words.empty()) throw std::invalid_argument("flesch-kincaid: no words");
  int sentences = 0;
  bool in_terminator = false;
  for (char c : text) {
    const bool term = c == '.' || c == '!' || c == '?';
    if (term && !in_terminator) ++sentences;
    in_terminator = term;
  }
  if (sentences == 0) sentences = 1;
  long syllables = 0;
  for (const auto& w : words) syllables += count_syllables(w);
  const double wps = static_cast<double>(words.size()) / sentences;
  const double spw = static_cast<double>(syllables) / static_cast<double>(words.size());
  return 0.39 * wps + 11.8 * spw - 15.59;
}

}  // namespace tsx
