#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mnmt/bpe.hpp"
#include "mnmt/corpus.hpp"
#include "mnmt/model.hpp"

namespace mnmt {

using ParamMap = std::map<std::string, Tensor>;

struct TrainConfig {
  std::string optimizer = "adam";  // adam | sgd
  float lr = 0.001f;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float decay_factor = 0.7f;
  int decay_epoch_start = 7;  // decay whenever epoch > this
  int batch_size = 32;
  int epochs = 10;
  float clip_norm = 5.0f;
  uint64_t seed = 1;

  // paper schedule: Adam 0.001 for the initial training, SGD 1.0 for the
  // train-infer-train rounds
  static TrainConfig adam_phase() { return TrainConfig{}; }
  static TrainConfig sgd_phase() {
    TrainConfig c;
    c.optimizer = "sgd";
    c.lr = 1.0f;
    return c;
  }
};

struct TrainState {
  int epoch = 0;
  float lr = 0.0f;
  double best_ppl = std::numeric_limits<double>::infinity();
  long adam_step_count = 0;
  ParamMap adam_m, adam_v;
};

// Standard bias-corrected Adam. Moments are created on first use and must
// keep matching the parameter shapes afterwards.
void adam_step(ParamMap& params, const std::map<std::string, const Tensor*>& grads,
               TrainState& state, float lr, float beta1 = 0.9f,
               float beta2 = 0.999f, float eps = 1e-8f);

// Global-norm clip then plain update.
void sgd_step(ParamMap& params, const std::map<std::string, Tensor*>& grads,
              float lr, float clip_norm);

// Learning-rate decay trigger: not improving, or past the epoch cap.
// Returns the (possibly decayed) rate and refreshes the best perplexity.
float maybe_decay(TrainState& state, double new_valid_ppl, int epoch,
                  float factor = 0.7f, int epoch_start = 7);

struct EpochLog {
  int epoch = 0;
  std::string phase;
  float lr = 0.0f;
  float train_loss = 0.0f;
  double valid_ppl = 0.0;

  std::string csv_line() const;
};

// raw corpus -> (tagged source ids, target ids) rows
Batch encode_corpus(const ParallelCorpus& corpus, SubwordEncoder& enc);

struct EncodedCorpus {
  std::string direction;
  Batch rows;
};

// Shuffles the union of all direction corpora each epoch, batches rows by
// exact source length, updates with the configured optimizer, and applies
// the perplexity decay schedule against the validation union.
std::vector<EpochLog> train_epochs(Seq2SeqModel& model,
                                   const std::vector<EncodedCorpus>& corpora,
                                   const TrainConfig& cfg,
                                   const Batch& valid_set);

void append_train_log(const std::string& path,
                      const std::vector<EpochLog>& logs);

}  // namespace mnmt
