#include "spikedet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace spikedet {

std::size_t Tensor::checked_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent " + std::to_string(e));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
}

} // namespace spikedet
