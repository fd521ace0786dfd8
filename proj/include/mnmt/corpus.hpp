#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mnmt/rng.hpp"

namespace mnmt {

using LangCode = std::string;  // "l0" (pivot) .. "l4"
using TokenSeq = std::vector<std::string>;

std::string join_tokens(const TokenSeq& tokens);
TokenSeq split_tokens(const std::string& line);

// target-forcing tag, e.g. <2l2>
std::string tag_token(const LangCode& tgt);
bool is_tag_token(const std::string& token);

struct SentencePair {
  LangCode src_lang, tgt_lang;
  TokenSeq src, tgt;
};

struct ParallelCorpus {
  LangCode src_lang, tgt_lang;
  std::vector<SentencePair> pairs;
  // original data vs model-generated pairs from a given loop round
  int synthetic_round = -1;  // -1 = original

  ParallelCorpus() = default;
  ParallelCorpus(LangCode src, LangCode tgt)
      : src_lang(std::move(src)), tgt_lang(std::move(tgt)) {}

  void add(TokenSeq src, TokenSeq tgt);
  size_t size() const { return pairs.size(); }
  std::string direction() const { return src_lang + "-" + tgt_lang; }
};

// One synthetic language: a bijective stem->surface lexicon plus a slot
// permutation per template. Surface form is always stem + suffix, so the
// lexicon round-trips exactly.
struct LangSpec {
  LangCode code;
  std::vector<std::string> surface;                 // indexed by stem id
  std::unordered_map<std::string, int> inverse;     // surface -> stem id
  std::vector<std::vector<int>> order;              // order[tpl] = permutation
};

// Five languages over one shared stem inventory. Template t has arity
// arities[t]; a sentence's length identifies its template.
struct LangFamily {
  uint64_t seed = 0;
  std::vector<std::string> stems;
  std::vector<int> arities;
  std::vector<LangCode> langs;  // l0 first
  std::map<LangCode, LangSpec> specs;

  const LangCode& pivot() const { return langs.front(); }
  const LangSpec& spec(const LangCode& code) const;
  int template_for_len(size_t len) const;  // -1 if no template has that arity
};

LangFamily gen_family(uint64_t seed, int n_stems, int n_templates);

void save_family(const LangFamily& family, const std::string& path);
LangFamily load_family(const std::string& path);

// Exact translation: invert the source lexicon, restore canonical slot
// order, then render with the target language's order and lexicon.
TokenSeq oracle_translate(const TokenSeq& s, const LangCode& from,
                          const LangCode& to, const LangFamily& family);

TokenSeq tag_source(const SentencePair& p);
TokenSeq untag(const TokenSeq& tagged);

struct DatasetBundle {
  // keyed by "src-tgt"
  std::map<std::string, ParallelCorpus> train;   // 8 supervised directions
  std::map<std::string, ParallelCorpus> valid;   // 8
  std::map<std::string, ParallelCorpus> test;    // 8 + 2 zero-shot
  // direct zero-shot-pair data, used only by the bilingual reference models
  std::map<std::string, ParallelCorpus> bilingual_train;
  std::map<std::string, ParallelCorpus> bilingual_valid;
};

// Spoke topology: every requested pair must connect a distinct non-pivot
// language to the pivot. The zero-shot pair gets test data (both
// directions) and bilingual corpora, but no entry in `train`.
DatasetBundle make_dataset(const LangFamily& family,
                           const std::vector<std::pair<LangCode, LangCode>>& spokes,
                           const std::pair<LangCode, LangCode>& zero_shot,
                           int n_train, int n_valid, int n_test, uint64_t seed);

void save_corpus(const ParallelCorpus& corpus, const std::string& dir,
                 const std::string& split);
ParallelCorpus load_corpus(const std::string& dir, const std::string& split,
                           const LangCode& src, const LangCode& tgt);

}  // namespace mnmt
