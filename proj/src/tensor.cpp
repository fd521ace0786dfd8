#include "mnmt/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mnmt {

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(shape_numel(shape), 0.0f);
}

Tensor::Tensor(std::vector<int> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor shape/data size mismatch");
  }
}

bool Tensor::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(float v) {
  for (float& x : data) x = v;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  return os.str();
}

}  // namespace mnmt
