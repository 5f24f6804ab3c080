#pragma once
// Dense NCHW tensor of doubles. Scalars, per-sample vectors and per-channel
// vectors are represented as 4-D shapes with unit extents.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lagds {

// Leaves doubles uninitialized on value-less construction so that outputs
// which are about to be overwritten are not zero-filled first.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  DefaultInitAllocator() = default;
  template <class U>
  DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}
  template <class U>
  void construct(U* p) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }

  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, v); }
  // Contents are indeterminate until written.
  static Tensor uninitialized(Shape shape);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  double* ptr(int n, int c, int h, int w) { return data_.data() + offset(n, c, h, w); }
  const double* ptr(int n, int c, int h, int w) const { return data_.data() + offset(n, c, h, w); }

  double* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size(); }
  const double* sample(int n) const {
    return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size();
  }

  // Single value of a one-element tensor.
  double item() const;

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<double, DefaultInitAllocator<double>> data_;
};

}  // namespace lagds
