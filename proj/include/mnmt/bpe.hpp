#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mnmt/corpus.hpp"

namespace mnmt {

struct MergeRule {
  std::string left, right;
  long freq = 0;  // pair frequency when the rule was learned
};

struct BpeModel {
  std::vector<MergeRule> merges;  // in learning order
  long threshold = 0;             // rules below this frequency are not applied
  std::string eow = "</w>";
};

// Greedy most-frequent-pair merging over the union of all sides of all
// corpora. Ties break by lexicographic (left, right) order; learning stops
// early once the best pair occurs fewer than twice.
BpeModel learn_bpe(const std::vector<const ParallelCorpus*>& corpora,
                   int n_merges, long threshold);

// Word-local segmentation: rules applied in learned order, skipping rules
// under the model threshold. Tag tokens pass through unsegmented.
std::vector<std::string> segment_word(const BpeModel& m,
                                      const std::string& word);
std::vector<std::string> apply_bpe(const BpeModel& m, const TokenSeq& tokens);

// Inverse of apply_bpe on its image: words close at end-of-word markers; a
// dangling final subword is treated as a word end.
TokenSeq detok(const std::vector<std::string>& subwords);

void save_bpe(const BpeModel& m, const std::string& path);
BpeModel load_bpe(const std::string& path);

// Shared id<->token table for all languages. Reserved entries first, then
// every target-forcing tag, then observed subwords in sorted order.
struct Vocabulary {
  static constexpr int kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(tokens.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens[size_t(id)]; }
  uint64_t hash() const;
};

Vocabulary build_vocab(const BpeModel& m,
                       const std::vector<const ParallelCorpus*>& corpora,
                       const std::vector<LangCode>& langs);

void save_vocab(const Vocabulary& v, const std::string& path);
Vocabulary load_vocab(const std::string& path);

// Memoized sentence encoder used by every training/decoding path: raw
// tokens -> tag-aware BPE -> ids.
class SubwordEncoder {
 public:
  SubwordEncoder(const BpeModel& m, const Vocabulary& v) : bpe_(m), vocab_(v) {}

  std::vector<int> encode(const TokenSeq& tokens);
  TokenSeq decode(const std::vector<int>& ids) const;  // ids -> words

  const Vocabulary& vocab() const { return vocab_; }
  const BpeModel& bpe() const { return bpe_; }

 private:
  const BpeModel& bpe_;
  const Vocabulary& vocab_;
  std::unordered_map<std::string, std::vector<int>> cache_;
};

}  // namespace mnmt
