#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "mnmt/eval.hpp"
#include "mnmt/rng.hpp"

using namespace mnmt;

TEST_CASE("bleu identity is 100") {
  std::vector<TokenSeq> lines = {{"a", "b", "c", "d"}, {"x", "y", "z", "w", "q"}};
  BleuReport r = bleu(lines, lines);
  CHECK(r.bleu == doctest::Approx(100.0));
  CHECK(r.brevity_penalty == doctest::Approx(1.0));
}

TEST_CASE("bleu hand-computed brevity case") {
  // all clipped precisions 1, BP = exp(1 - 6/4)
  std::vector<TokenSeq> hyp = {{"the", "cat", "sat", "on"}};
  std::vector<TokenSeq> ref = {{"the", "cat", "sat", "on", "the", "mat"}};
  BleuReport r = bleu(hyp, ref);
  CHECK(r.precisions[0] == doctest::Approx(1.0));
  CHECK(r.precisions[3] == doctest::Approx(1.0));
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(-0.5)));
  CHECK(r.bleu == doctest::Approx(60.65).epsilon(0.0002));
  CHECK(r.format() ==
        "BLEU = 60.65, 100.0/100.0/100.0/100.0 "
        "(BP=0.607, ratio=0.667, hyp_len=4, ref_len=6)");
}

TEST_CASE("bleu zero when no 4-gram matches") {
  std::vector<TokenSeq> hyp = {{"a", "b", "c", "d", "e"}};
  std::vector<TokenSeq> ref = {{"a", "b", "c", "x", "e"}};
  BleuReport r = bleu(hyp, ref);
  CHECK(r.bleu == 0.0);

  std::vector<TokenSeq> short_hyp = {{"a"}};
  std::vector<TokenSeq> short_ref = {{"a"}};
  CHECK(bleu(short_hyp, short_ref).bleu == 0.0);  // no 4-grams at all
}

TEST_CASE("bleu n-gram clipping") {
  // "the the the" vs "the cat": unigram correct clipped to ref count 1
  std::vector<TokenSeq> hyp = {{"the", "the", "the"}};
  std::vector<TokenSeq> ref = {{"the", "cat"}};
  BleuReport r = bleu(hyp, ref);
  CHECK(r.precisions[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("bleu is permutation invariant and tolerates empty lines") {
  std::vector<TokenSeq> hyp = {{"a", "b"}, {}, {"c", "d", "e", "f"}};
  std::vector<TokenSeq> ref = {{"a", "b"}, {"x"}, {"c", "d", "e", "f"}};
  BleuReport r1 = bleu(hyp, ref);
  std::vector<TokenSeq> hyp2 = {hyp[2], hyp[0], hyp[1]};
  std::vector<TokenSeq> ref2 = {ref[2], ref[0], ref[1]};
  BleuReport r2 = bleu(hyp2, ref2);
  CHECK(r1.bleu == doctest::Approx(r2.bleu));
  CHECK(r1.hyp_len == r2.hyp_len);
}

TEST_CASE("bleu input validation") {
  CHECK_THROWS_AS(bleu({{"a"}}, {}), std::invalid_argument);
}

TEST_CASE("perplexity") {
  ModelConfig cfg;
  cfg.emb_dim = 4;
  cfg.hidden_dim = 6;
  cfg.dropout = 0.0f;
  const int v = 30;
  Seq2SeqModel m(cfg, v, 0, 3);
  Rng rng(7);
  Batch corpus;
  for (int i = 0; i < 12; ++i) {
    std::vector<int> src, tgt;
    for (int j = 0; j < 5; ++j) src.push_back(4 + int(rng.below(v - 4)));
    for (int j = 0; j < 4; ++j) tgt.push_back(4 + int(rng.below(v - 4)));
    corpus.push_back({src, tgt});
  }

  SUBCASE("untrained model is near the uniform bound") {
    CHECK(perplexity(m, corpus) == doctest::Approx(double(v)).epsilon(0.5));
  }
  SUBCASE("matches exp(forward_loss) on a single bucket") {
    double ppl = perplexity(m, corpus, 64);
    float loss = m.forward_loss(corpus);
    CHECK(ppl == doctest::Approx(std::exp(double(loss))).epsilon(1e-6));
  }
  SUBCASE("empty corpus is an input error") {
    CHECK_THROWS_AS(perplexity(m, {}), std::invalid_argument);
  }
}

TEST_CASE("mixed rate") {
  LangWordSets vocab;
  vocab["l1"] = {"bolaim", "tiruim"};
  vocab["l2"] = {"bolaad", "tiruad"};

  SUBCASE("clean output scores zero") {
    MixedRateReport r = mixed_rate({{"bolaim", "tiruim"}}, "l1", vocab);
    CHECK(r.rate == 0.0);
  }
  SUBCASE("half mixed") {
    MixedRateReport r = mixed_rate({{"bolaim", "bolaad"}}, "l1", vocab);
    CHECK(r.rate == doctest::Approx(0.5));
    CHECK(r.mixed_tokens == 1);
  }
  SUBCASE("out-of-everywhere words count as mixed") {
    MixedRateReport r = mixed_rate({{"zzz", "bolaim"}}, "l1", vocab);
    CHECK(r.rate == doctest::Approx(0.5));
  }
  SUBCASE("unknown language code") {
    CHECK_THROWS_AS(mixed_rate({{"x"}}, "xx", vocab), std::invalid_argument);
  }
}

TEST_CASE("build_lang_vocab collects per-language word types") {
  ParallelCorpus c("l1", "l0");
  c.add({"bolaim"}, {"bolaos"});
  c.add({"tiruim"}, {"tiruos"});
  ParallelCorpus c2("l0", "l1");
  c2.add({"bolaos"}, {"bolaim"});
  LangWordSets sets = build_lang_vocab({&c, &c2});
  CHECK(sets.at("l1").count("bolaim") == 1);
  CHECK(sets.at("l1").count("bolaos") == 0);
  CHECK(sets.at("l0").count("bolaos") == 1);
  CHECK(sets.at("l0").size() == 2);
}
