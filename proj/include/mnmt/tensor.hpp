#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mnmt {

// Dense row-major float32 array. Values are written once by the op that
// produces them and treated as immutable afterwards.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<float> d);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  float at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols() + c];
  }
  float item() const { return data[0]; }

  bool all_finite() const;
  void fill(float v);

  // "m x k" style description used in error messages
  std::string shape_str() const;
};

size_t shape_numel(const std::vector<int>& shape);

}  // namespace mnmt
