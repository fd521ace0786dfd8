#include "mnmt/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace mnmt {

namespace {

using EMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap cmap(const Tensor& t) { return CMap(t.data.data(), t.rows(), t.cols()); }
Map map(Tensor& t) { return Map(t.data.data(), t.rows(), t.cols()); }

void require_2d(const Tensor& t, const char* what) {
  if (t.shape.size() != 2) {
    throw std::invalid_argument(std::string(what) +
                                ": expected 2-d tensor, got " + t.shape_str());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace

VarId Tape::push(Tensor value, std::function<void(Tape&)> bw) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  nodes_.push_back(Node{std::move(bw)});
  return static_cast<VarId>(values_.size() - 1);
}

VarId Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Tensor& Tape::grad(VarId id) {
  Tensor& g = grads_[static_cast<size_t>(id)];
  if (g.data.empty()) g = Tensor(values_[static_cast<size_t>(id)].shape);
  return g;
}

void Tape::backward(VarId out) {
  if (val(out).size() != 1) {
    throw std::invalid_argument("backward: output must be scalar");
  }
  grad(out).data[0] = 1.0f;
  for (size_t i = nodes_.size(); i-- > 0;) {
    // nodes whose gradient was never touched are off the loss path
    if (nodes_[i].backward && !grads_[i].data.empty()) {
      nodes_[i].backward(*this);
    }
  }
}

bool Tape::values_finite() const {
  for (const Tensor& t : values_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

VarId Tape::matmul(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_2d(ta, "matmul");
  require_2d(tb, "matmul");
  if (ta.cols() != tb.rows()) {
    throw std::invalid_argument("matmul: dimension mismatch " + ta.shape_str() +
                                " times " + tb.shape_str());
  }
  Tensor out({ta.rows(), tb.cols()});
  map(out).noalias() = cmap(ta) * cmap(tb);
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, b, id](Tape& t) {
    const Tensor& g = t.grad(id);
    map(t.grad(a)).noalias() += cmap(g) * cmap(t.val(b)).transpose();
    map(t.grad(b)).noalias() += cmap(t.val(a)).transpose() * cmap(g);
  });
}

VarId Tape::add(VarId a, VarId b) {
  const Tensor& ta = val(a);
  require_same_shape(ta, val(b), "add");
  Tensor out(ta.shape);
  const Tensor& tb = val(b);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, b, id](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

VarId Tape::add_row(VarId a, VarId bias) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(bias);
  require_2d(ta, "add_row");
  if (tb.shape.size() != 2 || tb.rows() != 1 || tb.cols() != ta.cols()) {
    throw std::invalid_argument("add_row: bias shape " + tb.shape_str() +
                                " does not broadcast over " + ta.shape_str());
  }
  Tensor out(ta.shape);
  const int n = ta.cols();
  for (int r = 0; r < ta.rows(); ++r) {
    for (int c = 0; c < n; ++c) out.at(r, c) = ta.at(r, c) + tb.data[c];
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, bias, id](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(bias);
    const int n = g.cols();
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < n; ++c) {
        ga.at(r, c) += g.at(r, c);
        gb.data[c] += g.at(r, c);
      }
    }
  });
}

VarId Tape::mul(VarId a, VarId b) {
  const Tensor& ta = val(a);
  require_same_shape(ta, val(b), "mul");
  Tensor out(ta.shape);
  const Tensor& tb = val(b);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, b, id](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i] * vb.data[i];
      gb.data[i] += g.data[i] * va.data[i];
    }
  });
}

VarId Tape::scale(VarId a, float c) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] * c;
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, c, id](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * c;
  });
}

VarId Tape::sigmoid(VarId a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.size(); ++i) {
    out.data[i] = 1.0f / (1.0f + std::exp(-ta.data[i]));
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, id](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& y = t.val(id);
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i] * y.data[i] * (1.0f - y.data[i]);
    }
  });
}

VarId Tape::tanh(VarId a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::tanh(ta.data[i]);
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, id](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& y = t.val(id);
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i] * (1.0f - y.data[i] * y.data[i]);
    }
  });
}

VarId Tape::concat_cols(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_2d(ta, "concat_cols");
  require_2d(tb, "concat_cols");
  if (ta.rows() != tb.rows()) {
    throw std::invalid_argument("concat_cols: row mismatch " + ta.shape_str() +
                                " vs " + tb.shape_str());
  }
  const int m = ta.rows(), na = ta.cols(), nb = tb.cols();
  Tensor out({m, na + nb});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < na; ++c) out.at(r, c) = ta.at(r, c);
    for (int c = 0; c < nb; ++c) out.at(r, na + c) = tb.at(r, c);
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, b, na, nb, id](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < na; ++c) ga.at(r, c) += g.at(r, c);
      for (int c = 0; c < nb; ++c) gb.at(r, c) += g.at(r, na + c);
    }
  });
}

VarId Tape::slice_cols(VarId a, int lo, int hi) {
  const Tensor& ta = val(a);
  require_2d(ta, "slice_cols");
  if (lo < 0 || hi > ta.cols() || lo >= hi) {
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(lo) +
                                "," + std::to_string(hi) + ") for " +
                                ta.shape_str());
  }
  const int m = ta.rows(), n = hi - lo;
  Tensor out({m, n});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out.at(r, c) = ta.at(r, lo + c);
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, lo, n, id](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < n; ++c) ga.at(r, lo + c) += g.at(r, c);
    }
  });
}

VarId Tape::lookup_rows(VarId table, const std::vector<int>& ids) {
  const Tensor& tt = val(table);
  require_2d(tt, "lookup_rows");
  const int v = tt.rows(), d = tt.cols();
  for (int i : ids) {
    if (i < 0 || i >= v) {
      throw std::out_of_range("lookup_rows: id " + std::to_string(i) +
                              " out of range for table " + tt.shape_str());
    }
  }
  Tensor out({static_cast<int>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r) {
    const float* src = tt.data.data() + static_cast<size_t>(ids[r]) * d;
    std::copy(src, src + d, out.data.data() + r * d);
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [table, ids, d, id](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& gt = t.grad(table);
    for (size_t r = 0; r < ids.size(); ++r) {
      float* dst = gt.data.data() + static_cast<size_t>(ids[r]) * d;
      const float* src = g.data.data() + r * d;
      for (int c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

VarId Tape::softmax_rows(VarId a) {
  const Tensor& ta = val(a);
  require_2d(ta, "softmax_rows");
  const int m = ta.rows(), n = ta.cols();
  Tensor out(ta.shape);
  for (int r = 0; r < m; ++r) {
    const float* x = ta.data.data() + static_cast<size_t>(r) * n;
    float* y = out.data.data() + static_cast<size_t>(r) * n;
    float mx = x[0];
    for (int c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int c = 0; c < n; ++c) y[c] *= inv;
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, id](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& y = t.val(id);
    Tensor& ga = t.grad(a);
    const int m = g.rows(), n = g.cols();
    for (int r = 0; r < m; ++r) {
      double dot = 0.0;
      for (int c = 0; c < n; ++c) dot += g.at(r, c) * y.at(r, c);
      for (int c = 0; c < n; ++c) {
        ga.at(r, c) += (g.at(r, c) - static_cast<float>(dot)) * y.at(r, c);
      }
    }
  });
}

VarId Tape::sum_all(VarId a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (float v : ta.data) s += v;
  const VarId id = static_cast<VarId>(values_.size());
  return push(Tensor::scalar(static_cast<float>(s)), [a, id](Tape& t) {
    const float g = t.grad(id).data[0];
    Tensor& ga = t.grad(a);
    for (float& v : ga.data) v += g;
  });
}

VarId Tape::stack(const std::vector<VarId>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack: no inputs");
  const Tensor& first = val(parts[0]);
  require_2d(first, "stack");
  const int b = first.rows(), h = first.cols();
  for (VarId p : parts) require_same_shape(val(p), first, "stack");
  const int l = static_cast<int>(parts.size());
  Tensor out({l, b, h});
  const size_t sz = static_cast<size_t>(b) * h;
  for (int i = 0; i < l; ++i) {
    std::copy(val(parts[i]).data.begin(), val(parts[i]).data.end(),
              out.data.begin() + i * sz);
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [parts, sz, id](Tape& t) {
    const Tensor& g = t.grad(id);
    for (size_t i = 0; i < parts.size(); ++i) {
      Tensor& gp = t.grad(parts[i]);
      const float* src = g.data.data() + i * sz;
      for (size_t j = 0; j < sz; ++j) gp.data[j] += src[j];
    }
  });
}

VarId Tape::bdot(VarId q, VarId mem) {
  const Tensor& tq = val(q);
  const Tensor& tm = val(mem);
  require_2d(tq, "bdot");
  if (tm.shape.size() != 3 || tm.dim(1) != tq.rows() || tm.dim(2) != tq.cols()) {
    throw std::invalid_argument("bdot: query " + tq.shape_str() +
                                " incompatible with memory " + tm.shape_str());
  }
  const int l = tm.dim(0), b = tq.rows(), h = tq.cols();
  Tensor out({b, l});
  for (int i = 0; i < l; ++i) {
    for (int r = 0; r < b; ++r) {
      const float* qr = tq.data.data() + static_cast<size_t>(r) * h;
      const float* mr =
          tm.data.data() + (static_cast<size_t>(i) * b + r) * h;
      double s = 0.0;
      for (int c = 0; c < h; ++c) s += qr[c] * mr[c];
      out.at(r, i) = static_cast<float>(s);
    }
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [q, mem, l, b, h, id](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& vq = t.val(q);
    const Tensor& vm = t.val(mem);
    Tensor& gq = t.grad(q);
    Tensor& gm = t.grad(mem);
    for (int i = 0; i < l; ++i) {
      for (int r = 0; r < b; ++r) {
        const float gv = g.at(r, i);
        if (gv == 0.0f) continue;
        const size_t moff = (static_cast<size_t>(i) * b + r) * h;
        const size_t qoff = static_cast<size_t>(r) * h;
        for (int c = 0; c < h; ++c) {
          gq.data[qoff + c] += gv * vm.data[moff + c];
          gm.data[moff + c] += gv * vq.data[qoff + c];
        }
      }
    }
  });
}

VarId Tape::weighted_sum(VarId w, VarId mem) {
  const Tensor& tw = val(w);
  const Tensor& tm = val(mem);
  require_2d(tw, "weighted_sum");
  if (tm.shape.size() != 3 || tm.dim(0) != tw.cols() || tm.dim(1) != tw.rows()) {
    throw std::invalid_argument("weighted_sum: weights " + tw.shape_str() +
                                " incompatible with memory " + tm.shape_str());
  }
  const int l = tm.dim(0), b = tw.rows(), h = tm.dim(2);
  Tensor out({b, h});
  for (int i = 0; i < l; ++i) {
    for (int r = 0; r < b; ++r) {
      const float wv = tw.at(r, i);
      const float* mr = tm.data.data() + (static_cast<size_t>(i) * b + r) * h;
      float* o = out.data.data() + static_cast<size_t>(r) * h;
      for (int c = 0; c < h; ++c) o[c] += wv * mr[c];
    }
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [w, mem, l, b, h, id](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& vw = t.val(w);
    const Tensor& vm = t.val(mem);
    Tensor& gw = t.grad(w);
    Tensor& gm = t.grad(mem);
    for (int i = 0; i < l; ++i) {
      for (int r = 0; r < b; ++r) {
        const size_t moff = (static_cast<size_t>(i) * b + r) * h;
        const size_t goff = static_cast<size_t>(r) * h;
        const float wv = vw.at(r, i);
        double dot = 0.0;
        for (int c = 0; c < h; ++c) {
          dot += g.data[goff + c] * vm.data[moff + c];
          gm.data[moff + c] += wv * g.data[goff + c];
        }
        gw.at(r, i) += static_cast<float>(dot);
      }
    }
  });
}

VarId Tape::picked_nll(VarId logits, const std::vector<int>& targets,
                       const std::vector<float>& mask) {
  const Tensor& tl = val(logits);
  require_2d(tl, "picked_nll");
  const int b = tl.rows(), v = tl.cols();
  if (static_cast<int>(targets.size()) != b ||
      static_cast<int>(mask.size()) != b) {
    throw std::invalid_argument("picked_nll: batch size mismatch");
  }
  for (int tgt : targets) {
    if (tgt < 0 || tgt >= v) {
      throw std::out_of_range("picked_nll: target " + std::to_string(tgt) +
                              " out of range for " + std::to_string(v) +
                              " classes");
    }
  }
  Tensor out({b});
  // softmax rows are cached for the backward pass
  auto probs = std::make_shared<Tensor>(std::vector<int>{b, v});
  for (int r = 0; r < b; ++r) {
    const float* x = tl.data.data() + static_cast<size_t>(r) * v;
    float* p = probs->data.data() + static_cast<size_t>(r) * v;
    float mx = x[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (int c = 0; c < v; ++c) {
      p[c] = std::exp(x[c] - mx);
      sum += p[c];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int c = 0; c < v; ++c) p[c] *= inv;
    const double logz = std::log(sum) + mx;
    out.data[r] = mask[r] == 0.0f
                      ? 0.0f
                      : static_cast<float>(logz - x[targets[r]]);
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out),
              [logits, targets, mask, probs, v, id](Tape& t) {
                const Tensor& g = t.grad(id);
                Tensor& gl = t.grad(logits);
                for (int r = 0; r < g.rows(); ++r) {
                  if (mask[r] == 0.0f) continue;
                  const float gv = g.data[r];
                  const float* p =
                      probs->data.data() + static_cast<size_t>(r) * v;
                  float* out_row = gl.data.data() + static_cast<size_t>(r) * v;
                  for (int c = 0; c < v; ++c) out_row[c] += gv * p[c];
                  out_row[targets[r]] -= gv;
                }
              });
}

VarId Tape::dropout(VarId a, float p, Rng& rng) {
  if (p <= 0.0f) return a;
  if (p >= 1.0f) throw std::invalid_argument("dropout: rate must be < 1");
  const Tensor& ta = val(a);
  auto keep = std::make_shared<Tensor>(ta.shape);
  const float scale = 1.0f / (1.0f - p);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.size(); ++i) {
    keep->data[i] = rng.uniform() < p ? 0.0f : scale;
    out.data[i] = ta.data[i] * keep->data[i];
  }
  const VarId id = static_cast<VarId>(values_.size());
  return push(std::move(out), [a, keep, id](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i] * keep->data[i];
    }
  });
}

// --- spec-level wrappers ---------------------------------------------------

Tensor op_matmul(const Tensor& a, const Tensor& b) {
  Tape t;
  return t.val(t.matmul(t.leaf(a), t.leaf(b)));
}

Tensor op_softmax(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("softmax: empty input");
  Tensor row = x.shape.size() == 1
                   ? Tensor({1, x.dim(0)}, x.data)
                   : x;
  Tape t;
  Tensor out = t.val(t.softmax_rows(t.leaf(std::move(row))));
  return x.shape.size() == 1 ? Tensor(x.shape, std::move(out.data)) : out;
}

float op_cross_entropy(const Tensor& logits, int target) {
  const int n = static_cast<int>(logits.size());
  if (target < 0 || target >= n) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                            " out of range for " + std::to_string(n) +
                            " classes");
  }
  Tape t;
  VarId l = t.leaf(Tensor({1, n}, logits.data));
  VarId nll = t.picked_nll(l, {target}, {1.0f});
  return t.val(nll).data[0];
}

float grad_check(const std::function<VarId(Tape&, VarId)>& f, const Tensor& x,
                 float h) {
  if (h <= 0.0f) throw std::invalid_argument("grad_check: h must be positive");
  auto eval = [&](const Tensor& point) {
    Tape t;
    VarId out = f(t, t.leaf(point));
    if (t.val(out).size() != 1) {
      throw std::invalid_argument("grad_check: f must be scalar-valued");
    }
    return t.val(out).data[0];
  };

  Tape t;
  VarId xid = t.leaf(x);
  VarId out = f(t, xid);
  const float fx = t.val(out).data[0];
  if (!std::isfinite(fx)) {
    throw std::runtime_error("grad_check: f(x) is not finite");
  }
  t.backward(out);
  const Tensor analytic = t.grad(xid);

  float worst = 0.0f;
  Tensor probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const float orig = x.data[i];
    probe.data[i] = orig + h;
    const float fp = eval(probe);
    probe.data[i] = orig - h;
    const float fm = eval(probe);
    probe.data[i] = orig;
    const float numeric = (fp - fm) / (2.0f * h);
    const float a = analytic.data[i];
    const float denom = std::max({1.0f, std::fabs(a), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

float clip_global_norm(std::vector<Tensor*> grads, float clip) {
  double sq = 0.0;
  for (const Tensor* g : grads) {
    for (float v : g->data) sq += static_cast<double>(v) * v;
  }
  const float norm = static_cast<float>(std::sqrt(sq));
  if (clip > 0.0f && norm > clip) {
    const float s = clip / norm;
    for (Tensor* g : grads) {
      for (float& v : g->data) v *= s;
    }
  }
  return norm;
}

}  // namespace mnmt
