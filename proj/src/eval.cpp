#include "mnmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace mnmt {

namespace {

std::map<std::string, long> ngram_counts(const TokenSeq& tokens, size_t n) {
  std::map<std::string, long> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (size_t j = 0; j < n; ++j) {
      key += tokens[i + j];
      key += '\x1f';
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuReport bleu(const std::vector<TokenSeq>& hyps,
                const std::vector<TokenSeq>& refs) {
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument(
        "bleu: hypothesis/reference count mismatch: " +
        std::to_string(hyps.size()) + " vs " + std::to_string(refs.size()));
  }
  long correct[4] = {0, 0, 0, 0};
  long total[4] = {0, 0, 0, 0};
  BleuReport r;
  for (size_t i = 0; i < hyps.size(); ++i) {
    r.hyp_len += long(hyps[i].size());
    r.ref_len += long(refs[i].size());
    for (size_t n = 1; n <= 4; ++n) {
      auto hyp_counts = ngram_counts(hyps[i], n);
      auto ref_counts = ngram_counts(refs[i], n);
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) {
          correct[n - 1] += std::min(count, it->second);
        }
      }
    }
  }
  if (r.hyp_len == 0) return r;

  r.brevity_penalty =
      r.hyp_len < r.ref_len
          ? std::exp(1.0 - double(r.ref_len) / double(r.hyp_len))
          : 1.0;
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < 4; ++n) {
    r.precisions[n] = total[n] > 0 ? double(correct[n]) / double(total[n]) : 0.0;
    if (correct[n] == 0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  r.bleu = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

std::string BleuReport::format() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "BLEU = %.2f, %.1f/%.1f/%.1f/%.1f "
                "(BP=%.3f, ratio=%.3f, hyp_len=%ld, ref_len=%ld)",
                bleu, 100.0 * precisions[0], 100.0 * precisions[1],
                100.0 * precisions[2], 100.0 * precisions[3], brevity_penalty,
                ref_len > 0 ? double(hyp_len) / double(ref_len) : 0.0, hyp_len,
                ref_len);
  return buf;
}

double perplexity(const Seq2SeqModel& model, const Batch& corpus,
                  int batch_size) {
  if (corpus.empty()) throw std::invalid_argument("perplexity: empty corpus");
  // exact-length buckets: attention then needs no source mask
  std::map<size_t, Batch> buckets;
  for (const auto& row : corpus) buckets[row.first.size()].push_back(row);

  double nll_sum = 0.0;
  long tokens = 0;
  for (auto& [len, rows] : buckets) {
    for (size_t i = 0; i < rows.size(); i += size_t(batch_size)) {
      Batch chunk(rows.begin() + long(i),
                  rows.begin() + long(std::min(rows.size(),
                                               i + size_t(batch_size))));
      Tape tape;
      auto g = model.bind(tape);
      LossResult r = model.build_loss(g, chunk, false, nullptr);
      nll_sum += double(tape.val(r.loss).item()) * double(r.token_count);
      tokens += r.token_count;
    }
  }
  return std::exp(nll_sum / double(tokens));
}

LangWordSets build_lang_vocab(
    const std::vector<const ParallelCorpus*>& corpora) {
  LangWordSets sets;
  for (const ParallelCorpus* c : corpora) {
    auto& src_set = sets[c->src_lang];
    auto& tgt_set = sets[c->tgt_lang];
    for (const SentencePair& p : c->pairs) {
      src_set.insert(p.src.begin(), p.src.end());
      tgt_set.insert(p.tgt.begin(), p.tgt.end());
    }
  }
  return sets;
}

MixedRateReport mixed_rate(const std::vector<TokenSeq>& hyps,
                           const LangCode& tgt,
                           const LangWordSets& lang_vocab) {
  auto it = lang_vocab.find(tgt);
  if (it == lang_vocab.end()) {
    throw std::invalid_argument("mixed_rate: unknown language code '" + tgt +
                                "'");
  }
  const auto& words = it->second;
  MixedRateReport r;
  for (const TokenSeq& hyp : hyps) {
    for (const std::string& tok : hyp) {
      ++r.total_tokens;
      if (!words.count(tok)) ++r.mixed_tokens;
    }
  }
  r.rate = r.total_tokens > 0 ? double(r.mixed_tokens) / double(r.total_tokens)
                              : 0.0;
  return r;
}

}  // namespace mnmt
