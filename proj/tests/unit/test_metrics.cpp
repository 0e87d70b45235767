#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "eciwb/error.hpp"
#include "eciwb/metrics.hpp"

using namespace eciwb;

namespace {

nlohmann::json fixture(const std::string& name) {
  std::ifstream in(std::string(ECIWB_FIXTURES) + "/" + name);
  REQUIRE(in);
  return nlohmann::json::parse(in);
}

std::vector<TokenSequence> one(const std::string& ref) { return {tokenize(ref)}; }

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("tokenize") {
    CHECK(tokenize("  The CAT\tsat\n") == TokenSequence{"the", "cat", "sat"});
    CHECK(tokenize("").empty());
  }

  TEST_CASE("modified precision") {
    const auto refs = one("the cat is on the mat");
    const Ratio r = modified_precision(tokenize("the the the the the the the"), refs, 1);
    CHECK(r.numerator == 2);
    CHECK(r.denominator == 7);
    CHECK(r.value() == doctest::Approx(2.0 / 7.0));

    const auto same = tokenize("the cat is on the mat");
    for (std::size_t n = 1; n <= 6; ++n) CHECK(modified_precision(same, refs, n).value() == 1.0);
    CHECK(modified_precision(tokenize("dog runs fast"), refs, 1).numerator == 0);
    const Ratio shorter = modified_precision(tokenize("the cat"), refs, 3);
    CHECK(shorter.numerator == 0);
    CHECK(shorter.denominator == 0);

    // Clipping takes the max count over references.
    const std::vector<TokenSequence> two{tokenize("the the cat"), tokenize("the cat the the")};
    const Ratio clipped = modified_precision(tokenize("the the the the"), two, 1);
    CHECK(clipped.numerator == 3);
    CHECK(clipped.numerator <= clipped.denominator);

    CHECK_THROWS_AS(modified_precision(same, std::vector<TokenSequence>{}, 1), ValueError);
    CHECK_THROWS_AS(modified_precision(same, refs, 0), ValueError);
  }

  TEST_CASE("bleu") {
    const auto refs = one("the quick brown fox jumps over the lazy dog");
    const BleuReport same = bleu(tokenize("the quick brown fox jumps over the lazy dog"), refs);
    CHECK(same.bleu == 1.0);
    CHECK(same.brevity_penalty == 1.0);

    // Half length: every n-gram matches, so only the brevity penalty remains.
    const auto long_ref = one("a b c d e f g h i j k l");
    const BleuReport half = bleu(tokenize("a b c d e f"), long_ref);
    CHECK(half.brevity_penalty == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(half.bleu == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

    // Zero 4-gram precision: literal gives 0, smoothed stays positive.
    const auto cand = tokenize("the cat sat on a mat");
    const auto r2 = one("the cat lay on the mat");
    CHECK(bleu(cand, r2, 4, BleuMode::kLiteral).bleu == 0.0);
    const double smoothed = bleu(cand, r2, 4, BleuMode::kSmoothed).bleu;
    CHECK(smoothed > 0.0);
    CHECK(smoothed < 1e-2);

    // Closest reference length, shorter on ties.
    const std::vector<TokenSequence> refs3{tokenize("a b c d e f g h"), tokenize("a b c d")};
    CHECK(bleu(tokenize("a b c d e f"), refs3).reference_length == 4);

    CHECK_THROWS_AS(bleu(TokenSequence{}, refs), ValueError);
  }

  TEST_CASE("order sensitivity") {
    const auto ref = one("the patient was given aspirin after the stroke");
    const auto shuffled = tokenize("stroke the after aspirin given was patient the");
    CHECK(rouge_n(shuffled, ref, 1).recall == 1.0);
    CHECK(bleu(shuffled, ref, 4, BleuMode::kSmoothed).bleu < 1e-3);
  }

  TEST_CASE("rouge") {
    const auto ref = one("the cat sat on the mat");
    const RougeReport r = rouge_n(tokenize("the cat"), ref, 1);
    CHECK(r.matched == 2);
    CHECK(r.reference_total == 6);
    CHECK(r.recall == doctest::Approx(1.0 / 3.0));
    CHECK(r.precision == 1.0);
    CHECK(rouge_n(tokenize("the cat sat on the mat"), ref, 1).recall == 1.0);
    CHECK(rouge_n(tokenize("dogs bark loudly"), ref, 1).recall == 0.0);
    const RougeReport degen = rouge_n(tokenize("the cat"), one("cat"), 2);
    CHECK(degen.degenerate);
    CHECK(degen.recall == 0.0);
    CHECK_THROWS_AS(rouge_n(tokenize("x"), std::vector<TokenSequence>{}, 1), ValueError);
  }

  TEST_CASE("fixture corpus") {
    const auto fx = fixture("bleu_corpus.json");
    std::vector<TokenSequence> cands;
    std::vector<std::vector<TokenSequence>> refs;
    std::vector<std::string> cand_text, ref_text;
    for (const auto& p : fx["pairs"]) {
      cand_text.push_back(p["candidate"]);
      ref_text.push_back(p["reference"]);
      cands.push_back(tokenize(cand_text.back()));
      refs.push_back(one(ref_text.back()));
    }
    const BleuReport b = corpus_bleu(cands, refs);
    CHECK(std::fabs(b.bleu - fx["corpus_bleu4"].get<double>()) < 1e-9);
    CHECK(std::fabs(b.brevity_penalty - fx["corpus_brevity_penalty"].get<double>()) < 1e-9);
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(b.counts[n].numerator == fx["corpus_precisions"][n][0].get<std::size_t>());
      CHECK(b.counts[n].denominator == fx["corpus_precisions"][n][1].get<std::size_t>());
    }
    const RougeReport r = corpus_rouge_n(cands, refs, 1);
    CHECK(r.matched == fx["corpus_rouge1_matched"].get<std::size_t>());
    CHECK(r.reference_total == fx["corpus_rouge1_total"].get<std::size_t>());
    CHECK(std::fabs(r.recall - fx["corpus_rouge1_recall"].get<double>()) < 1e-9);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      CHECK(std::fabs(bleu(cands[i], refs[i]).bleu - fx["sentence_bleu4_literal"][i].get<double>()) < 1e-9);
      CHECK(std::fabs(rouge_n(cands[i], refs[i], 1).recall - fx["sentence_rouge1_recall"][i].get<double>()) < 1e-9);
    }
    const MetricReport m = score_corpus(cand_text, ref_text);
    CHECK(m.bleu.bleu == b.bleu);
    CHECK(m.rouge.recall == r.recall);
    const auto j = to_json(m);
    CHECK(j.contains("bleu"));
    CHECK(j.contains("rouge"));
  }

  TEST_CASE("bounded outputs") {
    const std::vector<std::string> c{"a b c", "x y", "the the the", "q"};
    const std::vector<std::string> r{"a b c d", "y x z", "the cat", "q r s t u"};
    const MetricReport m = score_corpus(c, r);
    for (double p : m.bleu.precisions) CHECK((p >= 0.0 && p <= 1.0));
    CHECK((m.bleu.bleu >= 0.0 && m.bleu.bleu <= 1.0));
    CHECK((m.rouge.recall >= 0.0 && m.rouge.recall <= 1.0));
  }

  TEST_CASE("accuracy") {
    const std::vector<std::string> p{"yes", "No"}, g{"yes", "maybe"}, g2{"YES", "no"};
    CHECK(accuracy(p, g) == 0.5);
    CHECK(accuracy(p, g2) == 1.0);
    CHECK_THROWS_AS(accuracy(p, std::vector<std::string>{"yes"}), ValueError);
    CHECK_THROWS_AS(accuracy(std::vector<std::string>{}, std::vector<std::string>{}), ValueError);

    const auto fx = fixture("accuracy_500.json");
    const auto preds = fx["predictions"].get<std::vector<std::string>>();
    const auto gold = fx["gold"].get<std::vector<std::string>>();
    CHECK(preds.size() == 500);
    CHECK(accuracy(preds, gold) == fx["accuracy"].get<double>());
    CHECK(accuracy(preds, gold) * 500.0 == doctest::Approx(fx["correct"].get<double>()));
  }
}
