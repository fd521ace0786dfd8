#include "mnmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mnmt {

namespace {

const char* kConsonants = "bdfgklmnprstvz";
const char* kVowels = "aeiou";

// pairwise-disjoint suffix triples; one language never produces another
// language's surface forms
const std::vector<std::vector<std::string>> kSuffixes = {
    {"os", "en", "ar"},  // l0 (pivot)
    {"im", "ul", "ek"},  // l1
    {"ad", "ov", "ik"},  // l2
    {"um", "et", "is"},  // l3
    {"ol", "an", "er"},  // l4
};

std::string make_stem(Rng& rng) {
  std::string s;
  s += kConsonants[rng.below(14)];
  s += kVowels[rng.below(5)];
  s += kConsonants[rng.below(14)];
  s += kVowels[rng.below(5)];
  return s;
}

// canonical sentence: template + stem ids in canonical slot order
struct Canonical {
  int tpl;
  std::vector<int> stems;

  std::string key() const {
    std::string k;
    for (int s : stems) {
      k += std::to_string(s);
      k += ',';
    }
    return k;
  }
};

TokenSeq render(const Canonical& c, const LangSpec& spec) {
  const std::vector<int>& perm = spec.order[static_cast<size_t>(c.tpl)];
  TokenSeq out(c.stems.size());
  for (size_t i = 0; i < c.stems.size(); ++i) {
    out[i] = spec.surface[static_cast<size_t>(c.stems[perm[i]])];
  }
  return out;
}

Canonical sample_sentence(const LangFamily& family, Rng& rng) {
  Canonical c;
  c.tpl = static_cast<int>(rng.below(family.arities.size()));
  const int arity = family.arities[static_cast<size_t>(c.tpl)];
  std::unordered_set<int> used;
  while (static_cast<int>(c.stems.size()) < arity) {
    int s = static_cast<int>(rng.below(family.stems.size()));
    if (used.insert(s).second) c.stems.push_back(s);
  }
  return c;
}

std::vector<Canonical> sample_unique(const LangFamily& family, int count,
                                     Rng& rng,
                                     std::unordered_set<std::string>& used) {
  std::vector<Canonical> out;
  out.reserve(static_cast<size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    Canonical c = sample_sentence(family, rng);
    if (used.insert(c.key()).second) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::string join_tokens(const TokenSeq& tokens) {
  std::string line;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) line += ' ';
    line += tokens[i];
  }
  return line;
}

TokenSeq split_tokens(const std::string& line) {
  TokenSeq out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string tag_token(const LangCode& tgt) { return "<2" + tgt + ">"; }

bool is_tag_token(const std::string& token) {
  return token.size() > 3 && token[0] == '<' && token[1] == '2' &&
         token.back() == '>';
}

void ParallelCorpus::add(TokenSeq src, TokenSeq tgt) {
  if (src.empty() || tgt.empty()) {
    throw std::invalid_argument("corpus " + direction() +
                                ": empty side in sentence pair");
  }
  for (const TokenSeq* side : {&src, &tgt}) {
    for (const std::string& tok : *side) {
      if (is_tag_token(tok)) {
        throw std::invalid_argument("corpus " + direction() +
                                    ": tag token '" + tok + "' in raw text");
      }
    }
  }
  pairs.push_back(SentencePair{src_lang, tgt_lang, std::move(src), std::move(tgt)});
}

const LangSpec& LangFamily::spec(const LangCode& code) const {
  auto it = specs.find(code);
  if (it == specs.end()) {
    throw std::invalid_argument("unknown language code '" + code + "'");
  }
  return it->second;
}

int LangFamily::template_for_len(size_t len) const {
  for (size_t t = 0; t < arities.size(); ++t) {
    if (arities[t] == static_cast<int>(len)) return static_cast<int>(t);
  }
  return -1;
}

LangFamily gen_family(uint64_t seed, int n_stems, int n_templates) {
  if (n_stems < 20) {
    throw std::invalid_argument("gen_family: need at least 20 stems, got " +
                                std::to_string(n_stems));
  }
  if (n_templates < 5) {
    throw std::invalid_argument("gen_family: need at least 5 templates, got " +
                                std::to_string(n_templates));
  }
  if (n_templates > 10) {
    throw std::invalid_argument(
        "gen_family: more than 10 templates would exceed arity 12");
  }

  LangFamily family;
  family.seed = seed;
  Rng root(seed);

  Rng stem_rng = root.child("stems");
  std::unordered_set<std::string> seen;
  while (static_cast<int>(family.stems.size()) < n_stems) {
    std::string s = make_stem(stem_rng);
    if (seen.insert(s).second) family.stems.push_back(std::move(s));
  }

  for (int t = 0; t < n_templates; ++t) family.arities.push_back(3 + t);

  for (int li = 0; li < 5; ++li) {
    LangCode code = "l" + std::to_string(li);
    family.langs.push_back(code);
    LangSpec spec;
    spec.code = code;
    Rng lex_rng = root.child("lex:" + code);
    for (int s = 0; s < n_stems; ++s) {
      const auto& sufs = kSuffixes[static_cast<size_t>(li)];
      std::string word = family.stems[static_cast<size_t>(s)] +
                         sufs[lex_rng.below(sufs.size())];
      spec.inverse.emplace(word, s);
      spec.surface.push_back(std::move(word));
    }
    Rng ord_rng = root.child("order:" + code);
    for (int t = 0; t < n_templates; ++t) {
      const int arity = family.arities[static_cast<size_t>(t)];
      std::vector<int> perm(static_cast<size_t>(arity));
      for (int i = 0; i < arity; ++i) perm[static_cast<size_t>(i)] = i;
      if (li != 0) {
        // pivot keeps canonical order; others must genuinely reorder
        std::vector<int> identity = perm;
        do {
          ord_rng.shuffle(perm);
        } while (perm == identity);
      }
      spec.order.push_back(std::move(perm));
    }
    family.specs.emplace(code, std::move(spec));
  }
  return family;
}

TokenSeq oracle_translate(const TokenSeq& s, const LangCode& from,
                          const LangCode& to, const LangFamily& family) {
  const LangSpec& src = family.spec(from);
  const LangSpec& dst = family.spec(to);
  const int tpl = family.template_for_len(s.size());
  if (tpl < 0) {
    throw std::invalid_argument("oracle: no template with arity " +
                                std::to_string(s.size()));
  }
  // invert surface order back to canonical slots
  const std::vector<int>& src_perm = src.order[static_cast<size_t>(tpl)];
  std::vector<int> canonical(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    auto it = src.inverse.find(s[i]);
    if (it == src.inverse.end()) {
      throw std::invalid_argument("oracle: token '" + s[i] +
                                  "' is not a " + from + " word");
    }
    canonical[static_cast<size_t>(src_perm[i])] = it->second;
  }
  const std::vector<int>& dst_perm = dst.order[static_cast<size_t>(tpl)];
  TokenSeq out(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    out[i] = dst.surface[static_cast<size_t>(canonical[static_cast<size_t>(dst_perm[i])])];
  }
  return out;
}

TokenSeq tag_source(const SentencePair& p) {
  TokenSeq out;
  out.reserve(p.src.size() + 1);
  out.push_back(tag_token(p.tgt_lang));
  out.insert(out.end(), p.src.begin(), p.src.end());
  return out;
}

TokenSeq untag(const TokenSeq& tagged) {
  if (!tagged.empty() && is_tag_token(tagged.front())) {
    return TokenSeq(tagged.begin() + 1, tagged.end());
  }
  return tagged;
}

DatasetBundle make_dataset(
    const LangFamily& family,
    const std::vector<std::pair<LangCode, LangCode>>& spokes,
    const std::pair<LangCode, LangCode>& zero_shot, int n_train, int n_valid,
    int n_test, uint64_t seed) {
  // validate the Figure-1 topology: four distinct non-pivot spokes
  const LangCode& pivot = family.pivot();
  std::vector<LangCode> outer;
  for (const auto& [a, b] : spokes) {
    if (a != pivot && b != pivot) {
      throw std::invalid_argument("make_dataset: spoke " + a + "-" + b +
                                  " does not touch the pivot " + pivot);
    }
    const LangCode& non_pivot = a == pivot ? b : a;
    if (non_pivot == pivot) {
      throw std::invalid_argument("make_dataset: degenerate spoke");
    }
    family.spec(non_pivot);  // must exist
    if (std::find(outer.begin(), outer.end(), non_pivot) != outer.end()) {
      throw std::invalid_argument("make_dataset: duplicate spoke for " +
                                  non_pivot);
    }
    outer.push_back(non_pivot);
  }
  if (outer.size() != 4) {
    throw std::invalid_argument("make_dataset: expected 4 spokes, got " +
                                std::to_string(outer.size()));
  }
  const auto& [za, zb] = zero_shot;
  if (za == zb || za == pivot || zb == pivot ||
      std::find(outer.begin(), outer.end(), za) == outer.end() ||
      std::find(outer.begin(), outer.end(), zb) == outer.end()) {
    throw std::invalid_argument("make_dataset: zero-shot pair " + za + "-" +
                                zb + " must be two distinct non-pivot spokes");
  }

  Rng root(seed);
  std::unordered_set<std::string> used;  // global: no sentence reuse anywhere
  DatasetBundle out;

  auto emit_both = [&](std::map<std::string, ParallelCorpus>& dest,
                       const LangCode& a, const LangCode& b,
                       const std::vector<Canonical>& sents) {
    ParallelCorpus ab(a, b), ba(b, a);
    for (const Canonical& c : sents) {
      TokenSeq sa = render(c, family.spec(a));
      TokenSeq sb = render(c, family.spec(b));
      ab.add(sa, sb);
      ba.add(std::move(sb), std::move(sa));
    }
    dest.emplace(ab.direction(), std::move(ab));
    dest.emplace(ba.direction(), std::move(ba));
  };

  for (const LangCode& l : outer) {
    Rng rng = root.child("spoke:" + l);
    auto train = sample_unique(family, n_train, rng, used);
    auto valid = sample_unique(family, n_valid, rng, used);
    auto test = sample_unique(family, n_test, rng, used);
    emit_both(out.train, l, pivot, train);
    emit_both(out.valid, l, pivot, valid);
    emit_both(out.test, l, pivot, test);
  }

  {
    Rng rng = root.child("zeroshot:" + za + "-" + zb);
    auto test = sample_unique(family, n_test, rng, used);
    emit_both(out.test, za, zb, test);
  }
  {
    Rng rng = root.child("bilingual:" + za + "-" + zb);
    auto train = sample_unique(family, n_train, rng, used);
    auto valid = sample_unique(family, n_valid, rng, used);
    emit_both(out.bilingual_train, za, zb, train);
    emit_both(out.bilingual_valid, za, zb, valid);
  }
  return out;
}

// --- serialization ----------------------------------------------------------

void save_family(const LangFamily& family, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write family manifest " + path);
  f << "family v1\n";
  f << "seed " << family.seed << "\n";
  f << "stems";
  for (const auto& s : family.stems) f << " " << s;
  f << "\narities";
  for (int a : family.arities) f << " " << a;
  f << "\n";
  for (const LangCode& code : family.langs) {
    const LangSpec& spec = family.spec(code);
    f << "lang " << code << "\n";
    f << "  lex";
    for (const auto& w : spec.surface) f << " " << w;
    f << "\n";
    for (size_t t = 0; t < spec.order.size(); ++t) {
      f << "  order " << t;
      for (int i : spec.order[t]) f << " " << i;
      f << "\n";
    }
  }
}

LangFamily load_family(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read family manifest " + path);
  LangFamily family;
  std::string line;
  if (!std::getline(f, line) || line != "family v1") {
    throw std::runtime_error("bad family manifest header in " + path);
  }
  LangSpec* cur = nullptr;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string kw;
    is >> kw;
    if (kw == "seed") {
      is >> family.seed;
    } else if (kw == "stems") {
      std::string s;
      while (is >> s) family.stems.push_back(s);
    } else if (kw == "arities") {
      int a;
      while (is >> a) family.arities.push_back(a);
    } else if (kw == "lang") {
      LangCode code;
      is >> code;
      family.langs.push_back(code);
      cur = &family.specs[code];
      cur->code = code;
    } else if (kw == "lex") {
      std::string w;
      int id = 0;
      while (is >> w) {
        cur->inverse.emplace(w, id++);
        cur->surface.push_back(w);
      }
    } else if (kw == "order") {
      int t, i;
      is >> t;
      std::vector<int> perm;
      while (is >> i) perm.push_back(i);
      cur->order.push_back(std::move(perm));
      (void)t;
    }
  }
  return family;
}

void save_corpus(const ParallelCorpus& corpus, const std::string& dir,
                 const std::string& split) {
  const std::string base = dir + "/" + split + "." + corpus.direction();
  std::ofstream fs(base + ".src"), ft(base + ".tgt");
  if (!fs || !ft) throw std::runtime_error("cannot write corpus files " + base);
  for (const SentencePair& p : corpus.pairs) {
    fs << join_tokens(p.src) << "\n";
    ft << join_tokens(p.tgt) << "\n";
  }
}

ParallelCorpus load_corpus(const std::string& dir, const std::string& split,
                           const LangCode& src, const LangCode& tgt) {
  ParallelCorpus corpus(src, tgt);
  const std::string base = dir + "/" + split + "." + src + "-" + tgt;
  std::ifstream fs(base + ".src"), ft(base + ".tgt");
  if (!fs || !ft) throw std::runtime_error("cannot read corpus files " + base);
  std::string ls, lt;
  while (std::getline(fs, ls)) {
    if (!std::getline(ft, lt)) {
      throw std::runtime_error("corpus files " + base + " are not aligned");
    }
    corpus.add(split_tokens(ls), split_tokens(lt));
  }
  if (std::getline(ft, lt)) {
    throw std::runtime_error("corpus files " + base + " are not aligned");
  }
  return corpus;
}

}  // namespace mnmt
