#include "mnmt/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mnmt {

namespace {

constexpr char kMagic[5] = {'M', 'N', 'M', 'T', '1'};

std::vector<int> column(const std::vector<std::vector<int>>& rows, size_t t) {
  std::vector<int> out(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) out[r] = rows[r][t];
  return out;
}

}  // namespace

Seq2SeqModel::Seq2SeqModel(ModelConfig cfg, int vocab_size,
                           uint64_t vocab_hash, uint64_t seed)
    : cfg_(cfg), vocab_size_(vocab_size), vocab_hash_(vocab_hash) {
  if (vocab_size < 5) {
    throw std::invalid_argument("model: vocabulary too small");
  }
  const int e = cfg_.emb_dim, h = cfg_.hidden_dim, v = vocab_size_;
  const int enc_out = cfg_.bidirectional ? 2 * h : h;

  std::map<std::string, std::vector<int>> shapes;
  shapes["src_emb"] = {v, e};
  shapes["tgt_emb"] = {v, e};
  for (int l = 0; l < cfg_.enc_depth; ++l) {
    const int in = l == 0 ? e : enc_out;
    for (const char* dir : {"fwd", "bwd"}) {
      if (!cfg_.bidirectional && std::string(dir) == "bwd") continue;
      std::string p = "enc_l" + std::to_string(l) + "_" + dir;
      shapes[p + "_wx"] = {in, 4 * h};
      shapes[p + "_wh"] = {h, 4 * h};
      shapes[p + "_b"] = {1, 4 * h};
    }
  }
  if (cfg_.bidirectional) {
    shapes["enc_proj_w"] = {2 * h, h};
    shapes["enc_proj_b"] = {1, h};
  }
  for (int l = 0; l < cfg_.dec_depth; ++l) {
    const std::string p = "dec_l" + std::to_string(l);
    shapes[p + "_wx"] = {l == 0 ? e : h, 4 * h};
    shapes[p + "_wh"] = {h, 4 * h};
    shapes[p + "_b"] = {1, 4 * h};
    if (cfg_.bidirectional) {
      shapes["init_h_l" + std::to_string(l)] = {2 * h, h};
      shapes["init_c_l" + std::to_string(l)] = {2 * h, h};
    }
  }
  shapes["attn_w"] = {h, h};
  shapes["out_w"] = {2 * h, v};
  shapes["out_b"] = {1, v};

  Rng root(seed);
  for (const auto& [name, shape] : shapes) {
    Tensor t(shape);
    Rng r = root.child("param:" + name);
    for (float& x : t.data) x = r.uniform(-0.1f, 0.1f);
    params_.emplace(name, std::move(t));
  }
}

Seq2SeqModel::Graph Seq2SeqModel::bind(Tape& tape) const {
  Graph g{tape, {}};
  for (const auto& [name, tensor] : params_) {
    g.p.emplace(name, tape.leaf(tensor));
  }
  return g;
}

VarId Seq2SeqModel::maybe_dropout(Graph& g, VarId x, bool train,
                                  Rng* rng) const {
  if (!train || cfg_.dropout <= 0.0f) return x;
  if (!rng) throw std::invalid_argument("dropout requires an rng in train mode");
  return g.tape.dropout(x, cfg_.dropout, *rng);
}

VarId Seq2SeqModel::lstm_cell(Graph& g, VarId x, VarId h_prev, VarId c_prev,
                              const std::string& prefix, VarId* c_out) const {
  Tape& t = g.tape;
  const int h = cfg_.hidden_dim;
  VarId gates = t.add_row(
      t.add(t.matmul(x, g.p.at(prefix + "_wx")),
            t.matmul(h_prev, g.p.at(prefix + "_wh"))),
      g.p.at(prefix + "_b"));
  VarId in_g = t.sigmoid(t.slice_cols(gates, 0, h));
  VarId forget_g = t.sigmoid(t.slice_cols(gates, h, 2 * h));
  VarId out_g = t.sigmoid(t.slice_cols(gates, 2 * h, 3 * h));
  VarId cand = t.tanh(t.slice_cols(gates, 3 * h, 4 * h));
  VarId c_new = t.add(t.mul(forget_g, c_prev), t.mul(in_g, cand));
  *c_out = c_new;
  return t.mul(out_g, t.tanh(c_new));
}

EncodeResult Seq2SeqModel::encode(Graph& g,
                                  const std::vector<std::vector<int>>& src_batch,
                                  bool train, Rng* rng) const {
  if (src_batch.empty() || src_batch[0].empty()) {
    throw std::invalid_argument("encode: empty input");
  }
  const size_t len = src_batch[0].size();
  for (const auto& row : src_batch) {
    if (row.size() != len) {
      throw std::invalid_argument("encode: batch rows must share a length");
    }
    for (int id : row) {
      if (id < 0 || id >= vocab_size_) {
        throw std::out_of_range("encode: id " + std::to_string(id) +
                                " out of range for vocabulary of " +
                                std::to_string(vocab_size_));
      }
    }
  }
  Tape& t = g.tape;
  const int b = static_cast<int>(src_batch.size());
  const int h = cfg_.hidden_dim;

  // layer inputs: embeddings, then each layer's (possibly two-direction) output
  std::vector<VarId> inputs(len);
  for (size_t s = 0; s < len; ++s) {
    inputs[s] = maybe_dropout(
        g, t.lookup_rows(g.p.at("src_emb"), column(src_batch, s)), train, rng);
  }

  std::vector<VarId> final_h, final_c;  // per encoder layer, concat of dirs
  for (int l = 0; l < cfg_.enc_depth; ++l) {
    const std::string base = "enc_l" + std::to_string(l);
    VarId zero = t.leaf(Tensor({b, h}));

    std::vector<VarId> fwd_h(len);
    VarId hh = zero, cc = zero;
    for (size_t s = 0; s < len; ++s) {
      hh = lstm_cell(g, inputs[s], hh, cc, base + "_fwd", &cc);
      fwd_h[s] = hh;
    }
    VarId fwd_final_h = hh, fwd_final_c = cc;

    if (cfg_.bidirectional) {
      std::vector<VarId> bwd_h(len);
      hh = zero;
      cc = zero;
      for (size_t s = len; s-- > 0;) {
        hh = lstm_cell(g, inputs[s], hh, cc, base + "_bwd", &cc);
        bwd_h[s] = hh;
      }
      for (size_t s = 0; s < len; ++s) {
        inputs[s] = t.concat_cols(fwd_h[s], bwd_h[s]);
        if (l + 1 < cfg_.enc_depth) {
          inputs[s] = maybe_dropout(g, inputs[s], train, rng);
        }
      }
      final_h.push_back(t.concat_cols(fwd_final_h, hh));
      final_c.push_back(t.concat_cols(fwd_final_c, cc));
    } else {
      for (size_t s = 0; s < len; ++s) {
        inputs[s] = fwd_h[s];
        if (l + 1 < cfg_.enc_depth) {
          inputs[s] = maybe_dropout(g, inputs[s], train, rng);
        }
      }
      final_h.push_back(fwd_final_h);
      final_c.push_back(fwd_final_c);
    }
  }

  // attention memory from the top layer, projected to hidden_dim
  std::vector<VarId> mem(len);
  for (size_t s = 0; s < len; ++s) {
    mem[s] = cfg_.bidirectional
                 ? t.add_row(t.matmul(inputs[s], g.p.at("enc_proj_w")),
                             g.p.at("enc_proj_b"))
                 : inputs[s];
  }

  EncodeResult out;
  out.memory = t.stack(mem);
  for (int l = 0; l < cfg_.dec_depth; ++l) {
    const int src_layer = std::min(l, cfg_.enc_depth - 1);
    if (cfg_.bidirectional) {
      out.init.h.push_back(
          t.matmul(final_h[size_t(src_layer)],
                   g.p.at("init_h_l" + std::to_string(l))));
      out.init.c.push_back(
          t.matmul(final_c[size_t(src_layer)],
                   g.p.at("init_c_l" + std::to_string(l))));
    } else {
      out.init.h.push_back(final_h[size_t(src_layer)]);
      out.init.c.push_back(final_c[size_t(src_layer)]);
    }
  }
  return out;
}

AttendResult Seq2SeqModel::attend(Graph& g, VarId dec_hidden,
                                  VarId memory) const {
  Tape& t = g.tape;
  VarId scores = t.bdot(t.matmul(dec_hidden, g.p.at("attn_w")), memory);
  AttendResult out;
  out.weights = t.softmax_rows(scores);
  out.context = t.weighted_sum(out.weights, memory);
  return out;
}

StepResult Seq2SeqModel::decode_step(Graph& g, const DecoderState& state,
                                     const std::vector<int>& prev_ids,
                                     VarId memory, bool train, Rng* rng) const {
  for (int id : prev_ids) {
    if (id < 0 || id >= vocab_size_) {
      throw std::out_of_range("decode_step: id " + std::to_string(id) +
                              " out of range for vocabulary of " +
                              std::to_string(vocab_size_));
    }
  }
  Tape& t = g.tape;
  VarId x = maybe_dropout(g, t.lookup_rows(g.p.at("tgt_emb"), prev_ids), train,
                          rng);
  StepResult out;
  for (int l = 0; l < cfg_.dec_depth; ++l) {
    VarId c_new = -1;
    VarId h_new = lstm_cell(g, x, state.h[size_t(l)], state.c[size_t(l)],
                            "dec_l" + std::to_string(l), &c_new);
    out.state.h.push_back(h_new);
    out.state.c.push_back(c_new);
    x = h_new;
    if (l + 1 < cfg_.dec_depth) x = maybe_dropout(g, x, train, rng);
  }

  AttendResult att = attend(g, x, memory);
  out.attn_weights = att.weights;
  out.state.context = att.context;
  VarId feat = maybe_dropout(g, t.concat_cols(x, att.context), train, rng);
  out.logits = t.add_row(t.matmul(feat, g.p.at("out_w")), g.p.at("out_b"));
  return out;
}

LossResult Seq2SeqModel::build_loss(Graph& g, const Batch& batch, bool train,
                                    Rng* rng) const {
  if (batch.empty()) throw std::invalid_argument("forward_loss: empty batch");

  std::vector<std::vector<int>> src;
  std::vector<std::vector<int>> tgt;
  size_t max_tgt = 0;
  for (const auto& [s, raw_t] : batch) {
    src.push_back(s);
    std::vector<int> t = raw_t;
    while (!t.empty() && t.back() == Vocabulary::kPad) t.pop_back();
    max_tgt = std::max(max_tgt, t.size());
    tgt.push_back(std::move(t));
  }

  EncodeResult enc = encode(g, src, train, rng);
  DecoderState state = enc.init;

  Tape& t = g.tape;
  VarId total = -1;
  long tokens = 0;
  const size_t steps = max_tgt + 1;  // every row ends on </s>
  std::vector<int> prev(batch.size(), Vocabulary::kBos);
  for (size_t s = 0; s < steps; ++s) {
    std::vector<int> want(batch.size());
    std::vector<float> mask(batch.size());
    for (size_t r = 0; r < batch.size(); ++r) {
      if (s < tgt[r].size()) {
        want[r] = tgt[r][s];
        mask[r] = 1.0f;
      } else if (s == tgt[r].size()) {
        want[r] = Vocabulary::kEos;
        mask[r] = 1.0f;
      } else {
        want[r] = Vocabulary::kPad;
        mask[r] = 0.0f;
      }
      if (mask[r] != 0.0f) ++tokens;
    }
    StepResult step = decode_step(g, state, prev, enc.memory, train, rng);
    state = step.state;
    VarId nll = t.sum_all(t.picked_nll(step.logits, want, mask));
    total = total < 0 ? nll : t.add(total, nll);
    for (size_t r = 0; r < batch.size(); ++r) {
      prev[r] = s < tgt[r].size() ? tgt[r][s] : Vocabulary::kPad;
    }
  }
  return LossResult{t.scale(total, 1.0f / float(tokens)), tokens};
}

float Seq2SeqModel::forward_loss(const Batch& batch, bool train,
                                 Rng* rng) const {
  Tape tape;
  Graph g = bind(tape);
  LossResult r = build_loss(g, batch, train, rng);
  return tape.val(r.loss).item();
}

// --- checkpoint io ----------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const Seq2SeqModel& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kMagic, sizeof(kMagic));
  const ModelConfig& c = model.config();
  write_pod<int32_t>(f, c.emb_dim);
  write_pod<int32_t>(f, c.hidden_dim);
  write_pod<int32_t>(f, c.enc_depth);
  write_pod<int32_t>(f, c.dec_depth);
  write_pod<float>(f, c.dropout);
  write_pod<uint8_t>(f, c.bidirectional ? 1 : 0);
  write_pod<int32_t>(f, model.vocab_size());
  write_pod<uint64_t>(f, model.vocab_hash());
  write_pod<uint32_t>(f, uint32_t(model.params().size()));
  for (const auto& [name, tensor] : model.params()) {
    write_pod<uint32_t>(f, uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    write_pod<uint32_t>(f, uint32_t(tensor.shape.size()));
    for (int d : tensor.shape) write_pod<int32_t>(f, d);
    f.write(reinterpret_cast<const char*>(tensor.data.data()),
            std::streamsize(tensor.data.size() * sizeof(float)));
  }
}

Seq2SeqModel load_checkpoint(const std::string& path,
                             uint64_t expected_vocab_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path);
  char magic[5];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint " + path + " has bad magic");
  }
  ModelConfig c;
  c.emb_dim = read_pod<int32_t>(f);
  c.hidden_dim = read_pod<int32_t>(f);
  c.enc_depth = read_pod<int32_t>(f);
  c.dec_depth = read_pod<int32_t>(f);
  c.dropout = read_pod<float>(f);
  c.bidirectional = read_pod<uint8_t>(f) != 0;
  const int vocab_size = read_pod<int32_t>(f);
  const uint64_t vocab_hash = read_pod<uint64_t>(f);
  if (expected_vocab_hash != 0 && vocab_hash != expected_vocab_hash) {
    throw std::runtime_error("checkpoint " + path +
                             " was trained with a different vocabulary");
  }
  Seq2SeqModel model(c, vocab_size, vocab_hash, 0);
  const uint32_t n = read_pod<uint32_t>(f);
  if (n != model.params().size()) {
    throw std::runtime_error("checkpoint " + path +
                             " has unexpected parameter count");
  }
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(f);
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(read_pod<int32_t>(f));
    auto it = model.params().find(name);
    if (it == model.params().end() || it->second.shape != shape) {
      throw std::runtime_error("checkpoint " + path +
                               " has unexpected array " + name);
    }
    f.read(reinterpret_cast<char*>(it->second.data.data()),
           std::streamsize(it->second.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint truncated in " + name);
  }
  return model;
}

}  // namespace mnmt
