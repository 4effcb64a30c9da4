#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmsr {

#ifdef MMSR_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

/// Raised on any extent/shape contract violation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocator. Eigen's vectorized reductions peel up to the
/// first packet boundary, so rounding would otherwise depend on the heap address.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array. `product(shape) == data.size()` always holds.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  BasicTensor(Shape shape, Buffer<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  Buffer<T>& values() noexcept { return data_; }
  const Buffer<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] accessors
  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Buffer<T> data_;
};

using Tensor = BasicTensor<Real>;

/// Named learnable tensor plus its gradient accumulator.
template <class T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = BasicTensor<T>(value.shape()); }
};

using Parameter = BasicParameter<Real>;

}  // namespace mmsr
