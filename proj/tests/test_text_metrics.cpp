#include <doctest.h>

#include "tsxplain/text_metrics.hpp"

using namespace tsx;

TEST_CASE("tokenizer lowercases and splits on punctuation") {
  CHECK(tokenize("Model detected 3 spikes, near t=40!") ==
        std::vector<std::string>{"model", "detected", "3", "spikes", "near",
                                 "t", "40"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("...") == std::vector<std::string>{});
}

TEST_CASE("bleu-4 of a sentence against itself is exactly 1") {
  const auto c = tokenize("model detected elevated temperature between step "
                          "ten and step twenty");
  CHECK(bleu4(c, {c}) == 1.0);
}

TEST_CASE("bleu-4 frozen hand case, one token different") {
  const auto c = tokenize("model detected elevated temperature between step "
                          "ten and step twenty");
  const auto r = tokenize("model detected elevated temperature between step "
                          "ten and step thirty");
  // 9/10 * 8/9 * 7/8 * 6/7 under unit brevity penalty
  CHECK(bleu4(c, {r}) == doctest::Approx(0.8801117367933934).epsilon(1e-9));
}

TEST_CASE("bleu-4 smoothing keeps zero-overlap higher n-grams positive") {
  const auto c = tokenize("a b c d e");
  const auto r = tokenize("a x b y c");
  // unigrams 3/5; 2..4-grams all zero, smoothed to 1/5, 1/4, 1/3
  CHECK(bleu4(c, {r}) == doctest::Approx(0.3162277660168379).epsilon(1e-9));
}

TEST_CASE("bleu-4 brevity penalty for a short candidate") {
  const auto c = tokenize("the cat sat");
  const auto r = tokenize("the cat sat on mat");
  CHECK(bleu4(c, {r}) == doctest::Approx(0.513417119032592).epsilon(1e-9));
}

TEST_CASE("bleu-4 with no unigram overlap is zero") {
  CHECK(bleu4(tokenize("x y z"), {tokenize("a b c")}) == 0.0);
}

TEST_CASE("rouge-l hand cases") {
  const auto a = tokenize("a b c d");
  CHECK(rouge_l(a, a).f1 == doctest::Approx(1.0));
  CHECK(rouge_l(a, a).precision == doctest::Approx(1.0));
  CHECK(rouge_l(a, a).recall == doctest::Approx(1.0));

  const auto disjoint = rouge_l(tokenize("x y"), tokenize("a b"));
  CHECK(disjoint.f1 == 0.0);

  // LCS("a b c d", "a c d e") = "a c d" -> P = R = 3/4, F1 = 3/4
  const auto r = rouge_l(tokenize("a b c d"), tokenize("a c d e"));
  CHECK(r.precision == doctest::Approx(0.75));
  CHECK(r.recall == doctest::Approx(0.75));
  CHECK(r.f1 == doctest::Approx(0.75));
}

TEST_CASE("syllable counting hand cases") {
  CHECK(count_syllables("cat") == 1);
  CHECK(count_syllables("hello") == 2);
  CHECK(count_syllables("happy") == 2);
  CHECK(count_syllables("turtle") == 2);   // consonant-le keeps the e
  CHECK(count_syllables("anomalies") == 4);
  CHECK(count_syllables("time") == 1);     // silent trailing e
  CHECK(count_syllables("b") == 1);        // minimum one
}

TEST_CASE("flesch-kincaid frozen hand case") {
  // 10 words, 1 sentence, 13 syllables:
  // 0.39*10 + 11.8*1.3 - 15.59 = 3.65
  const std::string text = "the cat sat on the mat with hello happy turtle.";
  CHECK(flesch_kincaid(text) == doctest::Approx(3.65).epsilon(1e-9));
}

TEST_CASE("flesch-kincaid rises with longer sentences") {
  const std::string short_sentences = "the cat sat. the dog ran. birds fly.";
  const std::string one_sentence = "the cat sat and the dog ran and birds fly.";
  CHECK(flesch_kincaid(one_sentence) > flesch_kincaid(short_sentences));
  CHECK(flesch_kincaid(one_sentence) ==
        flesch_kincaid("the cat sat and the dog ran and birds fly."));
}
