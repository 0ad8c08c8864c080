#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikedet {

// Dense n-dimensional float32 array, row-major. CNN code uses the NCHW
// convention for 4-d tensors.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(checked_numel(shape), 0.0f) {}
  Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (checked_numel(shape) != data.size())
      throw std::invalid_argument("Tensor: shape " + shape_str() + " does not match data length " +
                                  std::to_string(data.size()));
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape.size()); }

  float& operator[](std::size_t i) { return data[i]; }
  float operator[](std::size_t i) const { return data[i]; }

  // NCHW accessors for 4-d tensors.
  float& at(int n, int c, int h, int w) { return data[idx4(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const { return data[idx4(n, c, h, w)]; }

  std::size_t idx4(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const;

  bool all_finite() const;

private:
  static std::size_t checked_numel(const std::vector<int>& s);
};

// Throws std::invalid_argument naming both shapes when they differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

} // namespace spikedet
