#pragma once

#include <functional>
#include <vector>

#include "mnmt/rng.hpp"
#include "mnmt/tensor.hpp"

namespace mnmt {

// Reverse-mode autodiff over whole-tensor primitives. Ops append nodes in
// execution order, so walking the node list backwards is a reverse
// topological sweep. Gradients are zero-initialised and accumulated, so
// anything not on a path to the loss keeps gradient zero.
//
// Single writer: one tape per forward pass, no sharing across threads.
class Tape {
 public:
  using VarId = int;

  VarId leaf(Tensor value);

  const Tensor& val(VarId id) const { return values_[static_cast<size_t>(id)]; }
  Tensor& grad(VarId id);

  // Seeds d(out)/d(out) = 1 and runs the reverse sweep. `out` must be scalar.
  void backward(VarId out);

  size_t num_nodes() const { return values_.size(); }
  bool values_finite() const;

  // --- primitives -------------------------------------------------------
  VarId matmul(VarId a, VarId b);
  VarId add(VarId a, VarId b);               // same shape
  VarId add_row(VarId a, VarId bias);        // bias [1,n] broadcast over rows
  VarId mul(VarId a, VarId b);               // elementwise
  VarId scale(VarId a, float c);
  VarId sigmoid(VarId a);
  VarId tanh(VarId a);
  VarId concat_cols(VarId a, VarId b);
  VarId slice_cols(VarId a, int lo, int hi);
  VarId lookup_rows(VarId table, const std::vector<int>& ids);
  VarId softmax_rows(VarId a);
  VarId sum_all(VarId a);
  // stacks L same-shape [B,H] tensors into [L,B,H]
  VarId stack(const std::vector<VarId>& parts);
  // q [B,H], mem [L,B,H] -> scores [B,L]; scores[b][l] = dot(q[b], mem[l][b])
  VarId bdot(VarId q, VarId mem);
  // w [B,L], mem [L,B,H] -> [B,H]; out[b] = sum_l w[b][l] * mem[l][b]
  VarId weighted_sum(VarId w, VarId mem);
  // per-row -log softmax(logits)[target]; masked rows contribute 0
  VarId picked_nll(VarId logits, const std::vector<int>& targets,
                   const std::vector<float>& mask);
  // inverted dropout: scales kept units by 1/(1-p) at train time
  VarId dropout(VarId a, float p, Rng& rng);

 private:
  struct Node {
    std::function<void(Tape&)> backward;  // empty for leaves
  };

  VarId push(Tensor value, std::function<void(Tape&)> bw);

  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;   // allocated lazily, shape of value
  std::vector<Node> nodes_;
};

using VarId = Tape::VarId;

// Spec-level wrappers over the primitives.
Tensor op_matmul(const Tensor& a, const Tensor& b);
Tensor op_softmax(const Tensor& x);
float op_cross_entropy(const Tensor& logits, int target);

// Compares the tape gradient of f at x against central finite differences
// (f(x+h)-f(x-h))/2h per coordinate and returns the worst relative error,
// with the denominator floored at 1 so near-zero gradients are judged
// absolutely (float32 differencing cannot resolve them relatively).
float grad_check(const std::function<VarId(Tape&, VarId)>& f, const Tensor& x,
                 float h);

// Global-norm gradient clipping: scales every tensor by clip/norm when the
// joint norm exceeds clip. Returns the pre-clip norm.
float clip_global_norm(std::vector<Tensor*> grads, float clip);

}  // namespace mnmt
