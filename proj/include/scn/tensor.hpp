#pragma once

#include <cstddef>
#include <new>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scn {

using Shape = std::vector<std::size_t>;

// Error hierarchy shared by every module. Each carries enough context in
// what() to identify the offending axis, coordinate or parameter.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class EmptyReductionError : public Error {
 public:
  using Error::Error;
};

class SequenceTooShortError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// 64-byte aligned storage. Vectorised kernels peel according to the
// runtime address, so alignment pins their summation order and keeps
// results bitwise reproducible across allocations.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, const std::vector<double>& values);
  Tensor(Shape shape, Buffer values);
  Tensor(Shape shape, std::initializer_list<double> values)
      : Tensor(std::move(shape), Buffer(values)) {}

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  // Allocates a zero gradient on first use.
  std::span<double> grad();
  std::span<const double> grad() const { return grad_; }
  void zero_grad();
  void drop_grad() { grad_.clear(); }

  // Same values, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  // Throws NumericError naming the first non-finite coordinate.
  void check_finite(const std::string& what) const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape shape_;
  Buffer values_;
  Buffer grad_;
};

// Snapshot format: "shape: d0 d1 ...\n" followed by the values as
// little-endian 64-bit floats.
void write_snapshot(std::ostream& out, const Tensor& t);
Tensor read_snapshot(std::istream& in);
void save_snapshot(const std::string& path, const Tensor& t);
Tensor load_snapshot(const std::string& path);

}  // namespace scn
