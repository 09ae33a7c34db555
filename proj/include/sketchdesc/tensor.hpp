#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "sketchdesc/error.hpp"

namespace sketchdesc {

/// Dense row-major array. T is float for training, double for gradient checks.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)), values(count(shape), fill) {}

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      require(d >= 0, "negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return values.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }

  void reshape(std::vector<int> s) {
    require(count(s) == values.size(), "reshape changes the element count");
    shape = std::move(s);
  }

  bool operator==(const Tensor&) const = default;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}

  void zero_grad() { std::fill(grad.values.begin(), grad.values.end(), T(0)); }
};

}  // namespace sketchdesc
