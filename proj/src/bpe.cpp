#include "mnmt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mnmt {

namespace {

// UTF-8 code point split (corpora are ASCII, but stay correct for any input)
std::vector<std::string> utf8_chars(const std::string& word) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < word.size()) {
    size_t len = 1;
    unsigned char c = static_cast<unsigned char>(word[i]);
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    len = std::min(len, word.size() - i);
    out.push_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> initial_symbols(const std::string& word,
                                         const std::string& eow) {
  std::vector<std::string> syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += eow;
  return syms;
}

void merge_in_place(std::vector<std::string>& syms, const std::string& left,
                    const std::string& right) {
  size_t w = 0;
  for (size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == left && syms[r + 1] == right) {
      syms[w] = left + right;
      r += 2;
    } else {
      if (w != r) syms[w] = std::move(syms[r]);
      r += 1;
    }
    ++w;
  }
  syms.resize(w);
}

std::map<std::string, long> word_frequencies(
    const std::vector<const ParallelCorpus*>& corpora) {
  std::map<std::string, long> freq;
  for (const ParallelCorpus* c : corpora) {
    for (const SentencePair& p : c->pairs) {
      for (const std::string& w : p.src) ++freq[w];
      for (const std::string& w : p.tgt) ++freq[w];
    }
  }
  return freq;
}

}  // namespace

BpeModel learn_bpe(const std::vector<const ParallelCorpus*>& corpora,
                   int n_merges, long threshold) {
  if (n_merges < 0) throw std::invalid_argument("learn_bpe: negative merges");
  std::map<std::string, long> freq = word_frequencies(corpora);
  if (freq.empty()) {
    throw std::invalid_argument("learn_bpe: empty corpus union");
  }

  BpeModel model;
  model.threshold = threshold;

  std::vector<std::pair<std::vector<std::string>, long>> words;
  words.reserve(freq.size());
  for (const auto& [w, f] : freq) {
    words.emplace_back(initial_symbols(w, model.eow), f);
  }

  for (int round = 0; round < n_merges; ++round) {
    // ordered map gives the lexicographically-smallest pair on ties
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto& [syms, f] : words) {
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        pairs[{syms[i], syms[i + 1]}] += f;
      }
    }
    const std::pair<std::string, std::string>* best = nullptr;
    long best_freq = 0;
    for (const auto& [pair, f] : pairs) {
      if (f > best_freq) {
        best = &pair;
        best_freq = f;
      }
    }
    if (!best || best_freq < 2) break;
    model.merges.push_back(MergeRule{best->first, best->second, best_freq});
    for (auto& [syms, f] : words) merge_in_place(syms, best->first, best->second);
  }
  return model;
}

std::vector<std::string> segment_word(const BpeModel& m,
                                      const std::string& word) {
  if (is_tag_token(word)) return {word};
  std::vector<std::string> syms = initial_symbols(word, m.eow);
  for (const MergeRule& rule : m.merges) {
    if (rule.freq < m.threshold) continue;
    if (syms.size() < 2) break;
    merge_in_place(syms, rule.left, rule.right);
  }
  return syms;
}

std::vector<std::string> apply_bpe(const BpeModel& m, const TokenSeq& tokens) {
  std::vector<std::string> out;
  for (const std::string& tok : tokens) {
    std::vector<std::string> syms = segment_word(m, tok);
    out.insert(out.end(), syms.begin(), syms.end());
  }
  return out;
}

TokenSeq detok(const std::vector<std::string>& subwords) {
  static const std::string eow = "</w>";
  TokenSeq out;
  std::string word;
  for (const std::string& sub : subwords) {
    if (is_tag_token(sub)) {
      if (!word.empty()) {
        out.push_back(word);
        word.clear();
      }
      out.push_back(sub);
      continue;
    }
    if (sub.size() >= eow.size() &&
        sub.compare(sub.size() - eow.size(), eow.size(), eow) == 0) {
      word += sub.substr(0, sub.size() - eow.size());
      out.push_back(word);
      word.clear();
    } else {
      word += sub;
    }
  }
  if (!word.empty()) out.push_back(word);  // tolerant close
  return out;
}

void save_bpe(const BpeModel& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write bpe model " + path);
  f << "bpe v1 threshold " << m.threshold << "\n";
  for (const MergeRule& r : m.merges) {
    f << r.left << " " << r.right << " " << r.freq << "\n";
  }
}

BpeModel load_bpe(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read bpe model " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty bpe model " + path);
  std::istringstream head(line);
  std::string word, version, key;
  BpeModel m;
  head >> word >> version >> key >> m.threshold;
  if (word != "bpe" || version != "v1" || key != "threshold") {
    throw std::runtime_error("bad bpe model header in " + path);
  }
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    MergeRule r;
    if (!(is >> r.left >> r.right >> r.freq)) {
      throw std::runtime_error("bad merge line in " + path + ": " + line);
    }
    m.merges.push_back(std::move(r));
  }
  return m;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? kUnk : it->second;
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const std::string& t : tokens) {
    h = fnv1a64(t.data(), t.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return h;
}

Vocabulary build_vocab(const BpeModel& m,
                       const std::vector<const ParallelCorpus*>& corpora,
                       const std::vector<LangCode>& langs) {
  Vocabulary v;
  v.tokens = {"<pad>", "<s>", "</s>", "<unk>"};
  std::vector<LangCode> sorted_langs = langs;
  std::sort(sorted_langs.begin(), sorted_langs.end());
  for (const LangCode& l : sorted_langs) v.tokens.push_back(tag_token(l));

  std::set<std::string> subwords;
  for (const ParallelCorpus* c : corpora) {
    for (const SentencePair& p : c->pairs) {
      for (const TokenSeq* side : {&p.src, &p.tgt}) {
        for (const std::string& w : *side) {
          for (std::string& s : segment_word(m, w)) {
            subwords.insert(std::move(s));
          }
        }
      }
    }
  }
  for (const std::string& s : subwords) v.tokens.push_back(s);
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    v.index.emplace(v.tokens[i], static_cast<int>(i));
  }
  if (v.index.size() != v.tokens.size()) {
    throw std::runtime_error("vocabulary has duplicate entries");
  }
  return v;
}

void save_vocab(const Vocabulary& v, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write vocabulary " + path);
  for (const std::string& t : v.tokens) f << t << "\n";
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read vocabulary " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(f, line)) {
    v.index.emplace(line, static_cast<int>(v.tokens.size()));
    v.tokens.push_back(line);
  }
  if (v.size() < 4 || v.tokens[0] != "<pad>" || v.tokens[1] != "<s>" ||
      v.tokens[2] != "</s>" || v.tokens[3] != "<unk>") {
    throw std::runtime_error("vocabulary " + path + " lacks reserved entries");
  }
  return v;
}

std::vector<int> SubwordEncoder::encode(const TokenSeq& tokens) {
  std::vector<int> out;
  for (const std::string& tok : tokens) {
    auto it = cache_.find(tok);
    if (it == cache_.end()) {
      std::vector<int> ids;
      for (const std::string& s : segment_word(bpe_, tok)) {
        ids.push_back(vocab_.id(s));
      }
      it = cache_.emplace(tok, std::move(ids)).first;
    }
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

TokenSeq SubwordEncoder::decode(const std::vector<int>& ids) const {
  std::vector<std::string> subwords;
  for (int id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kBos ||
        id == Vocabulary::kEos) {
      continue;
    }
    subwords.push_back(vocab_.token(id));
  }
  return detok(subwords);
}

}  // namespace mnmt
