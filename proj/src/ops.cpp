#include <algorithm>
#include <cstdint>
#include <cmath>
#include <numeric>

#include "scn/autodiff.hpp"

namespace scn {
namespace {

// Views a shape as [outer, len, inner] around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

template <class F, class D>
Var unary(Var x, F f, D df) {
  Tensor out(x.shape());
  const auto in = x.value().values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return x.tape->record(std::move(out), {x}, [df](Tape& tape, std::size_t self) {
    const auto id = tape.inputs(self)[0];
    const auto in = tape.value(id).values();
    const auto g = tape.grad(self);
    auto gx = tape.grad(id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(in[i]);
  });
}

// True when b broadcasts along a's leading axis rather than matching a.
bool broadcast_leading(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return false;
  Shape tail(a.begin() + 1, a.end());
  if (a.size() >= 2 && (b == tail || (b.size() == a.size() && b[0] == 1 &&
                                      Shape(b.begin() + 1, b.end()) == tail)))
    return true;
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable along the frame axis");
}

Var add_signed(Var a, Var b, double sign, const char* op) {
  const bool bc = broadcast_leading(a.shape(), b.shape(), op);
  const std::size_t period = b.value().size();
  Tensor out(a.shape());
  const auto av = a.value().values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + sign * bv[bc ? i % period : i];
  return a.tape->record(std::move(out), {a, b}, [sign, bc, period](Tape& tape, std::size_t self) {
    const auto& ids = tape.inputs(self);
    const auto g = tape.grad(self);
    if (tape.requires_grad(ids[0])) {
      auto ga = tape.grad(ids[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tape.requires_grad(ids[1])) {
      auto gb = tape.grad(ids[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc ? i % period : i] += sign * g[i];
    }
  });
}

}  // namespace

Var reduce(Var x, std::size_t axis, Reduction mode) {
  const Shape& s = x.shape();
  if (axis >= s.size())
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  const AxisSplit a = split_at(s, axis);
  if (a.len == 0) throw EmptyReductionError("reduce: axis " + std::to_string(axis) + " is empty");
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  const auto v = x.value().values();

  // For max/median: which source positions along the axis feed each output,
  // and with what weight.
  std::vector<std::uint32_t> pick_lo, pick_hi;
  if (mode != Reduction::mean) {
    pick_lo.resize(out.size());
    pick_hi.resize(out.size());
  }
  std::vector<std::uint32_t> order(a.len);
  std::vector<double> column(a.len);
  for (std::size_t o = 0; o < a.outer; ++o)
    for (std::size_t in = 0; in < a.inner; ++in) {
      const std::size_t oi = o * a.inner + in;
      const std::size_t base = o * a.len * a.inner + in;
      switch (mode) {
        case Reduction::mean: {
          // Offsets from the first element: exact when all values agree.
          const double first = v[base];
          double acc = 0.0;
          for (std::size_t k = 1; k < a.len; ++k) acc += v[base + k * a.inner] - first;
          out[oi] = first + acc / static_cast<double>(a.len);
          break;
        }
        case Reduction::max: {
          std::size_t best = 0;
          for (std::size_t k = 1; k < a.len; ++k)
            if (v[base + k * a.inner] > v[base + best * a.inner]) best = k;
          out[oi] = v[base + best * a.inner];
          pick_lo[oi] = pick_hi[oi] = static_cast<std::uint32_t>(best);
          break;
        }
        case Reduction::median: {
          for (std::size_t k = 0; k < a.len; ++k) column[k] = v[base + k * a.inner];
          std::iota(order.begin(), order.end(), 0u);
          std::stable_sort(order.begin(), order.end(),
                           [&](std::uint32_t l, std::uint32_t r) { return column[l] < column[r]; });
          const std::size_t hi = a.len / 2;
          const std::size_t lo = a.len % 2 ? hi : hi - 1;
          pick_lo[oi] = order[lo];
          pick_hi[oi] = order[hi];
          out[oi] = 0.5 * (column[order[lo]] + column[order[hi]]);
          if (lo == hi) out[oi] = column[order[lo]];
          break;
        }
      }
    }
  return x.tape->record(
      std::move(out), {x},
      [a, mode, pick_lo = std::move(pick_lo), pick_hi = std::move(pick_hi)](Tape& tape,
                                                                            std::size_t self) {
        const auto id = tape.inputs(self)[0];
        const auto g = tape.grad(self);
        auto gx = tape.grad(id);
        for (std::size_t o = 0; o < a.outer; ++o)
          for (std::size_t in = 0; in < a.inner; ++in) {
            const std::size_t oi = o * a.inner + in;
            const std::size_t base = o * a.len * a.inner + in;
            if (mode == Reduction::mean) {
              const double share = g[oi] / static_cast<double>(a.len);
              for (std::size_t k = 0; k < a.len; ++k) gx[base + k * a.inner] += share;
            } else if (pick_lo[oi] == pick_hi[oi]) {
              gx[base + pick_lo[oi] * a.inner] += g[oi];
            } else {
              gx[base + pick_lo[oi] * a.inner] += 0.5 * g[oi];
              gx[base + pick_hi[oi] * a.inner] += 0.5 * g[oi];
            }
          }
      });
}

Var abs(Var x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v) { return v >= 0.0 ? 1.0 : slope; });
}

Var add(Var a, Var b) { return add_signed(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_signed(a, b, -1.0, "sub"); }

Var scale(Var x, double factor) {
  return unary(
      x, [factor](double v) { return factor * v; }, [factor](double) { return factor; });
}

Var mul_scalar(Var x, Var w) {
  if (w.value().size() != 1)
    throw DimensionError("mul_scalar: weight must hold one value, got " + shape_str(w.shape()));
  const double wv = w.value()[0];
  Tensor out(x.shape());
  const auto in = x.value().values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = wv * in[i];
  return x.tape->record(std::move(out), {x, w}, [](Tape& tape, std::size_t self) {
    const auto& ids = tape.inputs(self);
    const auto in = tape.value(ids[0]).values();
    const double wv = tape.value(ids[1])[0];
    const auto g = tape.grad(self);
    if (tape.requires_grad(ids[0])) {
      auto gx = tape.grad(ids[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += wv * g[i];
    }
    if (tape.requires_grad(ids[1])) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += in[i] * g[i];
      tape.grad(ids[1])[0] += acc;
    }
  });
}

Var max_pool2x2(Var x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("max_pool2x2: need at least [H,W], got " + shape_str(s));
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h % 2) throw DimensionError("max_pool2x2: height axis " + std::to_string(h) + " is odd");
  if (w % 2) throw DimensionError("max_pool2x2: width axis " + std::to_string(w) + " is odd");
  Shape os = s;
  os[s.size() - 2] = h / 2;
  os[s.size() - 1] = w / 2;
  Tensor out(os);
  std::vector<std::uint32_t> arg(out.size());
  const std::size_t planes = x.value().size() / (h * w);
  const auto v = x.value().values();
  const std::size_t ho = h / 2, wo = w / 2;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        // Row-major scan of the block: the first maximum wins ties.
        const std::size_t base = p * h * w + 2 * oy * w + 2 * ox;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int c = 1; c < 4; ++c)
          if (v[cand[c]] > v[best]) best = cand[c];
        const std::size_t oi = (p * ho + oy) * wo + ox;
        out[oi] = v[best];
        arg[oi] = static_cast<std::uint32_t>(best);
      }
  return x.tape->record(std::move(out), {x}, [arg = std::move(arg)](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    auto gx = tape.grad(tape.inputs(self)[0]);
    for (std::size_t i = 0; i < g.size(); ++i) gx[arg[i]] += g[i];
  });
}

Var slice(Var x, std::size_t start, std::size_t count) {
  const Shape& s = x.shape();
  if (count == 0 || start + count > s[0])
    throw DimensionError("slice: frames [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside axis 0 of length " +
                         std::to_string(s[0]));
  Shape os = s;
  os[0] = count;
  const std::size_t fs = x.value().size() / s[0];
  const auto v = x.value().values();
  std::vector<double> vals(v.begin() + static_cast<std::ptrdiff_t>(start * fs),
                           v.begin() + static_cast<std::ptrdiff_t>((start + count) * fs));
  return x.tape->record(Tensor(os, std::move(vals)), {x},
                        [offset = start * fs](Tape& tape, std::size_t self) {
                          const auto g = tape.grad(self);
                          auto gx = tape.grad(tape.inputs(self)[0]);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
                        });
}

Var concat(Var a, Var b, std::size_t axis) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || axis >= sa.size())
    throw DimensionError("concat: incompatible ranks " + shape_str(sa) + " and " + shape_str(sb));
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (i != axis && sa[i] != sb[i])
      throw DimensionError("concat: axis " + std::to_string(i) + " differs between " +
                           shape_str(sa) + " and " + shape_str(sb));
  const AxisSplit pa = split_at(sa, axis), pb = split_at(sb, axis);
  Shape os = sa;
  os[axis] = sa[axis] + sb[axis];
  Tensor out(os);
  const std::size_t ca = pa.len * pa.inner, cb = pb.len * pb.inner;
  for (std::size_t o = 0; o < pa.outer; ++o) {
    std::copy_n(a.value().data() + o * ca, ca, out.data() + o * (ca + cb));
    std::copy_n(b.value().data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
  }
  return a.tape->record(std::move(out), {a, b}, [outer = pa.outer, ca, cb](Tape& tape,
                                                                           std::size_t self) {
    const auto& ids = tape.inputs(self);
    const auto g = tape.grad(self);
    for (int side = 0; side < 2; ++side) {
      if (!tape.requires_grad(ids[side])) continue;
      auto gx = tape.grad(ids[side]);
      const std::size_t chunk = side ? cb : ca, off = side ? ca : 0;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < chunk; ++i) gx[o * chunk + i] += g[o * (ca + cb) + off + i];
    }
  });
}

Var stack(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape& s0 = parts[0].shape();
  Shape os{parts.size()};
  os.insert(os.end(), s0.begin(), s0.end());
  Tensor out(os);
  const std::size_t fs = parts[0].value().size();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].shape() != s0)
      throw DimensionError("stack: part " + std::to_string(i) + " has shape " +
                           shape_str(parts[i].shape()) + ", expected " + shape_str(s0));
    std::copy_n(parts[i].value().data(), fs, out.data() + i * fs);
  }
  return parts[0].tape->record(std::move(out), {parts.begin(), parts.end()},
                               [fs](Tape& tape, std::size_t self) {
                                 const auto& ids = tape.inputs(self);
                                 const auto g = tape.grad(self);
                                 for (std::size_t i = 0; i < ids.size(); ++i) {
                                   if (!tape.requires_grad(ids[i])) continue;
                                   auto gx = tape.grad(ids[i]);
                                   for (std::size_t e = 0; e < fs; ++e) gx[e] += g[i * fs + e];
                                 }
                               });
}

Var reshape(Var x, Shape shape) {
  return x.tape->record(x.value().reshaped(std::move(shape)), {x},
                        [](Tape& tape, std::size_t self) {
                          const auto g = tape.grad(self);
                          auto gx = tape.grad(tape.inputs(self)[0]);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                        });
}

Var weighted_sum(Var x, const Tensor& weights) {
  if (weights.size() != x.value().size())
    throw DimensionError("weighted_sum: weights " + shape_str(weights.shape()) +
                         " do not match input " + shape_str(x.shape()));
  const auto v = x.value().values();
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) acc += weights[i] * v[i];
  return x.tape->record(Tensor::scalar(acc), {x}, [weights](Tape& tape, std::size_t self) {
    const double g = tape.grad(self)[0];
    auto gx = tape.grad(tape.inputs(self)[0]);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

}  // namespace scn
