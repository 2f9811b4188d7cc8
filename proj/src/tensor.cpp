#include "scn/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace scn {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

static void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i] == 0)
      throw DimensionError("axis " + std::to_string(i) + " of shape " + shape_str(shape) +
                           " is zero");
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, const std::vector<double>& values)
    : Tensor(std::move(shape), Buffer(values.begin(), values.end())) {}

Tensor::Tensor(Shape shape, Buffer values) : shape_(std::move(shape)), values_(std::move(values)) {
  validate_shape(shape_);
  if (values_.size() != shape_numel(shape_))
    throw DimensionError("value count " + std::to_string(values_.size()) +
                         " does not match shape " + shape_str(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape_));
  return shape_[axis];
}

std::span<double> Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(values_.size(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != values_.size())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), values_);
}

void Tensor::check_finite(const std::string& what) const {
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i]))
      throw NumericError(what + ": non-finite value at coordinate " + std::to_string(i));
}

void write_snapshot(std::ostream& out, const Tensor& t) {
  out << "shape:";
  for (auto d : t.shape()) out << ' ' << d;
  out << '\n';
  for (double v : t.values()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
}

Tensor read_snapshot(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("shape:", 0) != 0)
    throw Error("snapshot: missing 'shape:' header");
  std::istringstream hs(line.substr(6));
  Shape shape;
  for (std::size_t d; hs >> d;) shape.push_back(d);
  if (shape.empty()) throw Error("snapshot: empty shape");
  Buffer values(shape_numel(shape));
  for (auto& v : values) {
    char buf[8];
    if (!in.read(buf, 8)) throw Error("snapshot: truncated payload for shape " + shape_str(shape));
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_snapshot(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_snapshot(out, t);
}

Tensor load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_snapshot(in);
}

}  // namespace scn
