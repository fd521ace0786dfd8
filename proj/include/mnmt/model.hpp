#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mnmt/bpe.hpp"
#include "mnmt/tape.hpp"

namespace mnmt {

struct ModelConfig {
  int emb_dim = 32;
  int hidden_dim = 64;
  int enc_depth = 1;
  int dec_depth = 1;
  float dropout = 0.3f;
  bool bidirectional = true;

  static ModelConfig paper_scale() {
    return {512, 1024, 2, 2, 0.3f, true};
  }
};

// (tagged source ids, target ids) pairs; sources in one batch must share a
// length so attention needs no source mask
using Batch = std::vector<std::pair<std::vector<int>, std::vector<int>>>;

struct DecoderState {
  std::vector<VarId> h, c;  // per decoder layer, [B,H]
  VarId context = -1;       // last attention context, -1 before any step
};

struct EncodeResult {
  VarId memory;  // [L,B,H] encoder states, attention-ready
  DecoderState init;
};

struct AttendResult {
  VarId context;  // [B,H]
  VarId weights;  // [B,L], rows sum to 1
};

struct StepResult {
  VarId logits;  // [B,V]
  DecoderState state;
  VarId attn_weights;
};

struct LossResult {
  VarId loss;        // scalar: mean NLL per non-pad target token
  long token_count;  // non-pad target tokens in the batch
};

// LSTM encoder-decoder with Luong-style general attention over a shared
// vocabulary. All parameters live in a name->Tensor map; forward passes
// bind them onto a Tape so the same graph code serves training (with
// backward) and decoding (forward only).
class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig cfg, int vocab_size, uint64_t vocab_hash,
               uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  uint64_t vocab_hash() const { return vocab_hash_; }

  std::map<std::string, Tensor>& params() { return params_; }
  const std::map<std::string, Tensor>& params() const { return params_; }

  // Parameters bound as leaves onto a caller-owned tape. One bind per
  // forward pass (training batch or decoding session).
  struct Graph {
    Tape& tape;
    std::map<std::string, VarId> p;
  };
  Graph bind(Tape& tape) const;

  // src_batch: same-length rows of tagged source ids
  EncodeResult encode(Graph& g,
                      const std::vector<std::vector<int>>& src_batch,
                      bool train = false, Rng* rng = nullptr) const;

  AttendResult attend(Graph& g, VarId dec_hidden, VarId memory) const;

  StepResult decode_step(Graph& g, const DecoderState& state,
                         const std::vector<int>& prev_ids, VarId memory,
                         bool train = false, Rng* rng = nullptr) const;

  LossResult build_loss(Graph& g, const Batch& batch, bool train,
                        Rng* rng) const;

  // teacher-forced mean per-token NLL (builds and evaluates a fresh graph)
  float forward_loss(const Batch& batch, bool train = false,
                     Rng* rng = nullptr) const;

 private:
  VarId lstm_cell(Graph& g, VarId x, VarId h_prev, VarId c_prev,
                  const std::string& prefix, VarId* c_out) const;
  VarId maybe_dropout(Graph& g, VarId x, bool train, Rng* rng) const;

  ModelConfig cfg_;
  int vocab_size_ = 0;
  uint64_t vocab_hash_ = 0;
  std::map<std::string, Tensor> params_;
};

// Binary checkpoint: magic "MNMT1", config, vocabulary hash, then named
// little-endian float32 arrays. Loading rejects a mismatched vocab hash.
void save_checkpoint(const Seq2SeqModel& model, const std::string& path);
Seq2SeqModel load_checkpoint(const std::string& path,
                             uint64_t expected_vocab_hash);

}  // namespace mnmt
