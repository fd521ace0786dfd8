#pragma once

#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "mnmt/corpus.hpp"
#include "mnmt/model.hpp"

namespace mnmt {

struct BleuReport {
  double bleu = 0.0;  // percentage, 0..100
  double precisions[4] = {0, 0, 0, 0};
  double brevity_penalty = 0.0;
  long hyp_len = 0;
  long ref_len = 0;

  // multi-bleu.perl output line
  std::string format() const;
};

// Corpus-level case-sensitive 4-gram BLEU with clipped counts and
// BP = min(1, exp(1 - ref_len/hyp_len)); single reference per hypothesis.
BleuReport bleu(const std::vector<TokenSeq>& hyps,
                const std::vector<TokenSeq>& refs);

// exp(mean per-token NLL) over the encoded corpus; buckets rows by source
// length internally
double perplexity(const Seq2SeqModel& model, const Batch& corpus,
                  int batch_size = 64);

struct MixedRateReport {
  double rate = 0.0;  // fraction of output tokens outside the target lexicon
  long mixed_tokens = 0;
  long total_tokens = 0;
};

using LangWordSets = std::map<LangCode, std::unordered_set<std::string>>;

// word types per language, collected from each language's sides of the
// training corpora
LangWordSets build_lang_vocab(
    const std::vector<const ParallelCorpus*>& corpora);

MixedRateReport mixed_rate(const std::vector<TokenSeq>& hyps,
                           const LangCode& tgt, const LangWordSets& lang_vocab);

}  // namespace mnmt
