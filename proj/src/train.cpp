#include "mnmt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mnmt/eval.hpp"

namespace mnmt {

namespace {

void require_shape(const Tensor& param, const Tensor& grad,
                   const std::string& name) {
  if (param.shape != grad.shape) {
    throw std::invalid_argument("optimizer: gradient shape " +
                                grad.shape_str() + " does not match " + name +
                                " " + param.shape_str());
  }
}

}  // namespace

void adam_step(ParamMap& params,
               const std::map<std::string, const Tensor*>& grads,
               TrainState& state, float lr, float beta1, float beta2,
               float eps) {
  if (state.adam_m.empty()) {
    for (const auto& [name, p] : params) {
      state.adam_m.emplace(name, Tensor(p.shape));
      state.adam_v.emplace(name, Tensor(p.shape));
    }
  }
  ++state.adam_step_count;
  const double t = double(state.adam_step_count);
  const float corr1 = 1.0f / float(1.0 - std::pow(double(beta1), t));
  const float corr2 = 1.0f / float(1.0 - std::pow(double(beta2), t));
  for (auto& [name, p] : params) {
    const Tensor& g = *grads.at(name);
    require_shape(p, g, name);
    Tensor& m = state.adam_m.at(name);
    Tensor& v = state.adam_v.at(name);
    for (size_t i = 0; i < p.size(); ++i) {
      m.data[i] = beta1 * m.data[i] + (1.0f - beta1) * g.data[i];
      v.data[i] = beta2 * v.data[i] + (1.0f - beta2) * g.data[i] * g.data[i];
      const float m_hat = m.data[i] * corr1;
      const float v_hat = v.data[i] * corr2;
      p.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

void sgd_step(ParamMap& params, const std::map<std::string, Tensor*>& grads,
              float lr, float clip_norm) {
  std::vector<Tensor*> flat;
  for (auto& [name, p] : params) {
    Tensor* g = grads.at(name);
    require_shape(p, *g, name);
    flat.push_back(g);
  }
  clip_global_norm(flat, clip_norm);
  for (auto& [name, p] : params) {
    const Tensor& g = *grads.at(name);
    for (size_t i = 0; i < p.size(); ++i) p.data[i] -= lr * g.data[i];
  }
}

float maybe_decay(TrainState& state, double new_valid_ppl, int epoch,
                  float factor, int epoch_start) {
  if (new_valid_ppl <= 0.0) {
    throw std::invalid_argument("maybe_decay: perplexity must be positive");
  }
  if (new_valid_ppl >= state.best_ppl || epoch > epoch_start) {
    state.lr *= factor;
  }
  state.best_ppl = std::min(state.best_ppl, new_valid_ppl);
  return state.lr;
}

std::string EpochLog::csv_line() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.6g,%.5f,%.5f", epoch, phase.c_str(),
                double(lr), double(train_loss), valid_ppl);
  return buf;
}

Batch encode_corpus(const ParallelCorpus& corpus, SubwordEncoder& enc) {
  Batch rows;
  rows.reserve(corpus.size());
  for (const SentencePair& p : corpus.pairs) {
    rows.push_back({enc.encode(tag_source(p)), enc.encode(p.tgt)});
  }
  return rows;
}

std::vector<EpochLog> train_epochs(Seq2SeqModel& model,
                                   const std::vector<EncodedCorpus>& corpora,
                                   const TrainConfig& cfg,
                                   const Batch& valid_set) {
  Batch all;
  for (const EncodedCorpus& c : corpora) {
    all.insert(all.end(), c.rows.begin(), c.rows.end());
  }
  if (all.empty()) {
    throw std::invalid_argument("train_epochs: empty corpus union");
  }
  const bool use_adam = cfg.optimizer == "adam";
  if (!use_adam && cfg.optimizer != "sgd") {
    throw std::invalid_argument("train_epochs: unknown optimizer '" +
                                cfg.optimizer + "'");
  }

  TrainState state;
  state.lr = cfg.lr;
  std::vector<EpochLog> logs;
  Rng root(cfg.seed);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = root.child("epoch:" + std::to_string(epoch));
    std::vector<size_t> order(all.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    // exact source-length buckets keep attention mask-free; batch order is
    // then reshuffled so length does not correlate with training time
    std::map<size_t, std::vector<size_t>> buckets;
    for (size_t idx : order) buckets[all[idx].first.size()].push_back(idx);
    std::vector<std::vector<size_t>> batches;
    for (auto& [len, rows] : buckets) {
      for (size_t i = 0; i < rows.size(); i += size_t(cfg.batch_size)) {
        batches.emplace_back(
            rows.begin() + long(i),
            rows.begin() + long(std::min(rows.size(),
                                         i + size_t(cfg.batch_size))));
      }
    }
    rng.shuffle(batches);

    double loss_sum = 0.0;
    long token_sum = 0;
    for (const std::vector<size_t>& batch_ids : batches) {
      Batch batch;
      batch.reserve(batch_ids.size());
      for (size_t idx : batch_ids) batch.push_back(all[idx]);

      Tape tape;
      auto g = model.bind(tape);
      LossResult loss = model.build_loss(g, batch, true, &rng);
      tape.backward(loss.loss);
      loss_sum += double(tape.val(loss.loss).item()) * double(loss.token_count);
      token_sum += loss.token_count;

      if (use_adam) {
        std::vector<Tensor*> flat;
        std::map<std::string, const Tensor*> grads;
        for (const auto& [name, id] : g.p) {
          Tensor& grad = tape.grad(id);
          flat.push_back(&grad);
          grads.emplace(name, &grad);
        }
        clip_global_norm(flat, cfg.clip_norm);
        adam_step(model.params(), grads, state, state.lr, cfg.adam_beta1,
                  cfg.adam_beta2, cfg.adam_eps);
      } else {
        std::map<std::string, Tensor*> grads;
        for (const auto& [name, id] : g.p) {
          grads.emplace(name, &tape.grad(id));
        }
        sgd_step(model.params(), grads, state.lr, cfg.clip_norm);
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.phase = cfg.optimizer;
    log.lr = state.lr;
    log.train_loss = float(loss_sum / double(token_sum));
    log.valid_ppl = valid_set.empty() ? 0.0 : perplexity(model, valid_set);
    if (!valid_set.empty()) {
      maybe_decay(state, log.valid_ppl, epoch, cfg.decay_factor,
                  cfg.decay_epoch_start);
    }
    state.epoch = epoch;
    logs.push_back(std::move(log));
  }
  return logs;
}

void append_train_log(const std::string& path,
                      const std::vector<EpochLog>& logs) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot append training log " + path);
  for (const EpochLog& l : logs) f << l.csv_line() << "\n";
}

}  // namespace mnmt
