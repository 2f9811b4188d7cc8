// Convolution kernels. The production path lowers every convolution onto
// dense matrix products (patch extraction + GEMM); the *_reference functions
// are direct loops kept as oracles for the tests.

#include <algorithm>
#include <array>

#include <Eigen/Core>

#include "scn/autodiff.hpp"

#ifndef SCN_CONV_BAND
#define SCN_CONV_BAND 16384
#endif

namespace scn {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using Stride = Eigen::OuterStride<>;
using MapS = Eigen::Map<MatR, 0, Stride>;
using CMapS = Eigen::Map<const MatR, 0, Stride>;

struct ConvGeom {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

ConvGeom conv_geometry(const Shape& in, const Shape& k, std::size_t stride, std::size_t pad) {
  if (in.size() != 3 && in.size() != 4)
    throw DimensionError("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(in));
  if (k.size() != 4)
    throw DimensionError("conv2d: kernel must be [C_out,C_in,kh,kw], got " + shape_str(k));
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t off = in.size() == 4 ? 1 : 0;
  ConvGeom g{};
  g.n = off ? in[0] : 1;
  g.cin = in[off];
  g.h = in[off + 1];
  g.w = in[off + 2];
  g.cout = k[0];
  g.kh = k[2];
  g.kw = k[3];
  g.stride = stride;
  g.pad = pad;
  if (k[1] != g.cin)
    throw DimensionError("conv2d: channel axis mismatch, input has " + std::to_string(g.cin) +
                         " channels, kernel axis 1 expects " + std::to_string(k[1]));
  if (g.kh > g.h + 2 * pad)
    throw DimensionError("conv2d: kernel height " + std::to_string(g.kh) +
                         " exceeds padded input height " + std::to_string(g.h + 2 * pad));
  if (g.kw > g.w + 2 * pad)
    throw DimensionError("conv2d: kernel width " + std::to_string(g.kw) +
                         " exceeds padded input width " + std::to_string(g.w + 2 * pad));
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

bool is_pointwise(const ConvGeom& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

// Output columns [lo, hi) of a stride-1 row read inside the image for
// kernel column kx.
inline void valid_span(const ConvGeom& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  const auto shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
  const auto first = std::max<std::ptrdiff_t>(0, -shift);
  const auto last = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.wo),
                                             static_cast<std::ptrdiff_t>(g.w) - shift);
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(std::max(first, last));
}

// col[(c*kh + ky)*kw + kx][(oy - oy0)*wo + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
// for output rows [oy0, oy1).
void im2col(const double* img, const ConvGeom& g, std::size_t oy0, std::size_t oy1, double* col) {
  const std::size_t band = (oy1 - oy0) * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * band;
        std::size_t lo = 0, hi = 0;
        if (g.stride == 1) valid_span(g, kx, lo, hi);
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + (oy - oy0) * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          if (g.stride == 1) {
            std::fill(dst, dst + lo, 0.0);
            std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, dst + lo);
            std::fill(dst + hi, dst + g.wo, 0.0);
            continue;
          }
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
}

void col2im_add(const double* col, const ConvGeom& g, std::size_t oy0, std::size_t oy1,
                double* img) {
  const std::size_t band = (oy1 - oy0) * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * band;
        std::size_t lo = 0, hi = 0;
        if (g.stride == 1) valid_span(g, kx, lo, hi);
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + (oy - oy0) * g.wo;
          if (g.stride == 1) {
            double* d = dst + kx - g.pad;
            for (std::size_t ox = lo; ox < hi; ++ox) d[ox] += src[ox];
            continue;
          }
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w))
              dst[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
}

// Output rows per patch band, sized so the band's patch matrix stays in L2.
std::size_t band_rows(const ConvGeom& g) {
  const std::size_t budget = SCN_CONV_BAND;
  return std::clamp<std::size_t>(budget / std::max<std::size_t>(1, g.patch() * g.wo), 1, g.ho);
}

// Slice tau of a [C,C,3,1,1] kernel as a C x C matrix.
MatR temporal_slice(const Tensor& kernel, std::size_t tau) {
  const std::size_t c = kernel.dim(0);
  MatR m(c, c);
  for (std::size_t o = 0; o < c; ++o)
    for (std::size_t i = 0; i < c; ++i) m(o, i) = kernel[(o * c + i) * 3 + tau];
  return m;
}

void check_temporal_kernel(const Shape& in, const Shape& k, const char* op) {
  if (in.size() != 4)
    throw DimensionError(std::string(op) + ": input must be [n,C,H,W], got " + shape_str(in));
  if (k.size() != 5 || k[2] != 3 || k[3] != 1 || k[4] != 1)
    throw DimensionError(std::string(op) + ": kernel must be [C,C,3,1,1], got " + shape_str(k));
  if (k[0] != in[1] || k[1] != in[1])
    throw DimensionError(std::string(op) + ": channel axis mismatch, input has " +
                         std::to_string(in[1]) + " channels, kernel is " + shape_str(k));
}

}  // namespace

Var conv2d(Var input, Var kernel, std::optional<Var> bias, std::size_t stride,
           std::size_t padding) {
  const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  if (bias && bias->value().size() != g.cout)
    throw DimensionError("conv2d: bias has " + std::to_string(bias->value().size()) +
                         " entries, expected " + std::to_string(g.cout));
  Shape out_shape = input.shape().size() == 4 ? Shape{g.n, g.cout, g.ho, g.wo}
                                              : Shape{g.cout, g.ho, g.wo};
  Tensor out(out_shape);
  const Tensor& x = input.value();
  CMapR wmat(kernel.value().data(), g.cout, g.patch());
  const bool pointwise = is_pointwise(g);
  const std::size_t rows = band_rows(g);
  Buffer col(pointwise ? 0 : g.patch() * rows * g.wo);
  const std::size_t in_stride = g.cin * g.h * g.w;
  const std::size_t out_stride = g.cout * g.pixels();
  for (std::size_t f = 0; f < g.n; ++f) {
    const double* img = x.data() + f * in_stride;
    double* yf = out.data() + f * out_stride;
    if (pointwise) {
      MapR(yf, g.cout, g.pixels()).noalias() = wmat * CMapR(img, g.patch(), g.pixels());
    } else {
      for (std::size_t oy0 = 0; oy0 < g.ho; oy0 += rows) {
        const std::size_t oy1 = std::min(g.ho, oy0 + rows), band = (oy1 - oy0) * g.wo;
        im2col(img, g, oy0, oy1, col.data());
        MapS(yf + oy0 * g.wo, g.cout, band, Stride(static_cast<Eigen::Index>(g.pixels()))).noalias() =
            wmat * CMapR(col.data(), g.patch(), band);
      }
    }
    if (bias) {
      MapR y(yf, g.cout, g.pixels());
      const Tensor& b = bias->value();
      for (std::size_t o = 0; o < g.cout; ++o) y.row(o).array() += b[o];
    }
  }

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return input.tape->record(
      std::move(out), std::move(inputs), [g, pointwise, has_bias](Tape& tape, std::size_t self) {
        const auto& ids = tape.inputs(self);
        const Tensor& x = tape.value(ids[0]);
        const Tensor& k = tape.value(ids[1]);
        const auto gout = tape.grad(self);
        const std::size_t in_stride = g.cin * g.h * g.w;
        const std::size_t out_stride = g.cout * g.pixels();
        const bool need_x = tape.requires_grad(ids[0]);
        const bool need_k = tape.requires_grad(ids[1]);
        const bool need_b = has_bias && tape.requires_grad(ids[2]);
        CMapR wmat(k.data(), g.cout, g.patch());
        const std::size_t rows = band_rows(g);
        Buffer col(pointwise ? 0 : g.patch() * rows * g.wo);
        Buffer dcol(pointwise ? 0 : g.patch() * rows * g.wo);
        MatR dw = MatR::Zero(g.cout, g.patch());
        for (std::size_t f = 0; f < g.n; ++f) {
          const double* dyf = gout.data() + f * out_stride;
          const double* img = x.data() + f * in_stride;
          if (pointwise) {
            CMapR dy(dyf, g.cout, g.pixels());
            if (need_k) dw.noalias() += dy * CMapR(img, g.patch(), g.pixels()).transpose();
            if (need_x) {
              auto gx = tape.grad(ids[0]);
              MapR(gx.data() + f * in_stride, g.patch(), g.pixels()).noalias() +=
                  wmat.transpose() * dy;
            }
          } else {
            for (std::size_t oy0 = 0; oy0 < g.ho; oy0 += rows) {
              const std::size_t oy1 = std::min(g.ho, oy0 + rows), band = (oy1 - oy0) * g.wo;
              CMapS dy(dyf + oy0 * g.wo, g.cout, band, Stride(static_cast<Eigen::Index>(g.pixels())));
              if (need_k) {
                im2col(img, g, oy0, oy1, col.data());
                dw.noalias() += dy * CMapR(col.data(), g.patch(), band).transpose();
              }
              if (need_x) {
                auto gx = tape.grad(ids[0]);
                MapR(dcol.data(), g.patch(), band).noalias() = wmat.transpose() * dy;
                col2im_add(dcol.data(), g, oy0, oy1, gx.data() + f * in_stride);
              }
            }
          }
          if (need_b) {
            CMapR dy(dyf, g.cout, g.pixels());
            auto gb = tape.grad(ids[2]);
            for (std::size_t o = 0; o < g.cout; ++o) gb[o] += dy.row(o).sum();
          }
        }
        if (need_k) {
          auto gk = tape.grad(ids[1]);
          MapR(gk.data(), g.cout, g.patch()) += dw;
        }
      });
}

Var conv3d_t3(Var input, Var kernel, std::size_t segment_len) {
  check_temporal_kernel(input.shape(), kernel.shape(), "conv3d_t3");
  const Shape& s = input.shape();
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  const std::size_t seg = segment_len == 0 ? n : segment_len;
  if (n % seg != 0)
    throw DimensionError("conv3d_t3: frame count " + std::to_string(n) +
                         " is not a multiple of segment length " + std::to_string(seg));
  const Tensor& x = input.value();
  const std::array<MatR, 3> ks{temporal_slice(kernel.value(), 0),
                               temporal_slice(kernel.value(), 1),
                               temporal_slice(kernel.value(), 2)};
  Tensor out(s);
  const std::size_t fs = c * hw;
  for (std::size_t t = 0; t < n; ++t) {
    MapR y(out.data() + t * fs, c, hw);
    const std::size_t pos = t % seg;
    for (std::size_t tau = 0; tau < 3; ++tau) {
      if ((tau == 0 && pos == 0) || (tau == 2 && pos + 1 == seg)) continue;
      const std::size_t src = t + tau - 1;
      y.noalias() += ks[tau] * CMapR(x.data() + src * fs, c, hw);
    }
  }
  return input.tape->record(
      std::move(out), {input, kernel}, [n, c, hw, seg](Tape& tape, std::size_t self) {
        const auto& ids = tape.inputs(self);
        const Tensor& x = tape.value(ids[0]);
        const Tensor& k = tape.value(ids[1]);
        const auto gout = tape.grad(self);
        const std::size_t fs = c * hw;
        const bool need_x = tape.requires_grad(ids[0]);
        const bool need_k = tape.requires_grad(ids[1]);
        const std::array<MatR, 3> ks{temporal_slice(k, 0), temporal_slice(k, 1),
                                     temporal_slice(k, 2)};
        std::array<MatR, 3> dk{MatR::Zero(c, c), MatR::Zero(c, c), MatR::Zero(c, c)};
        for (std::size_t t = 0; t < n; ++t) {
          CMapR dy(gout.data() + t * fs, c, hw);
          const std::size_t pos = t % seg;
          for (std::size_t tau = 0; tau < 3; ++tau) {
            if ((tau == 0 && pos == 0) || (tau == 2 && pos + 1 == seg)) continue;
            const std::size_t src = t + tau - 1;
            if (need_k) dk[tau].noalias() += dy * CMapR(x.data() + src * fs, c, hw).transpose();
            if (need_x) {
              auto gx = tape.grad(ids[0]);
              MapR(gx.data() + src * fs, c, hw).noalias() += ks[tau].transpose() * dy;
            }
          }
        }
        if (need_k) {
          auto gk = tape.grad(ids[1]);
          for (std::size_t o = 0; o < c; ++o)
            for (std::size_t i = 0; i < c; ++i)
              for (std::size_t tau = 0; tau < 3; ++tau) gk[(o * c + i) * 3 + tau] += dk[tau](o, i);
        }
      });
}

Var cyclic_window_conv(Var input, Var kernel, std::size_t window) {
  check_temporal_kernel(input.shape(), kernel.shape(), "cyclic_window_conv");
  const Shape& s = input.shape();
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  if (window < 1 || window > n)
    throw SequenceTooShortError("cyclic_window_conv: window length " + std::to_string(window) +
                                " does not fit sequence of " + std::to_string(n) + " frames");
  const std::size_t fs = c * hw;
  const Tensor& x = input.value();
  // mixed[tau][t] = K_tau * x[t]; every window position is a sum of three of these.
  std::array<Buffer, 3> mixed;
  for (std::size_t tau = 0; tau < 3; ++tau) {
    const MatR k = temporal_slice(kernel.value(), tau);
    mixed[tau].resize(n * fs);
    for (std::size_t t = 0; t < n; ++t)
      MapR(mixed[tau].data() + t * fs, c, hw).noalias() = k * CMapR(x.data() + t * fs, c, hw);
  }
  Tensor out({n, window, c, s[2], s[3]});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < window; ++i) {
      double* dst = out.data() + (j * window + i) * fs;
      const double* center = mixed[1].data() + ((j + i) % n) * fs;
      for (std::size_t e = 0; e < fs; ++e) dst[e] = center[e];
      if (i > 0) {
        const double* prev = mixed[0].data() + ((j + i - 1) % n) * fs;
        for (std::size_t e = 0; e < fs; ++e) dst[e] += prev[e];
      }
      if (i + 1 < window) {
        const double* next = mixed[2].data() + ((j + i + 1) % n) * fs;
        for (std::size_t e = 0; e < fs; ++e) dst[e] += next[e];
      }
    }
  return input.tape->record(
      std::move(out), {input, kernel}, [n, c, hw, window](Tape& tape, std::size_t self) {
        const auto& ids = tape.inputs(self);
        const Tensor& x = tape.value(ids[0]);
        const Tensor& k = tape.value(ids[1]);
        const auto gout = tape.grad(self);
        const std::size_t fs = c * hw;
        std::array<Buffer, 3> dmixed;
        for (auto& d : dmixed) d.assign(n * fs, 0.0);
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < window; ++i) {
            const double* g = gout.data() + (j * window + i) * fs;
            auto acc = [&](std::size_t tau, std::size_t t) {
              double* d = dmixed[tau].data() + t * fs;
              for (std::size_t e = 0; e < fs; ++e) d[e] += g[e];
            };
            acc(1, (j + i) % n);
            if (i > 0) acc(0, (j + i - 1) % n);
            if (i + 1 < window) acc(2, (j + i + 1) % n);
          }
        const bool need_x = tape.requires_grad(ids[0]);
        const bool need_k = tape.requires_grad(ids[1]);
        for (std::size_t tau = 0; tau < 3; ++tau) {
          const MatR kt = temporal_slice(k, tau);
          MatR dk = MatR::Zero(c, c);
          for (std::size_t t = 0; t < n; ++t) {
            CMapR dm(dmixed[tau].data() + t * fs, c, hw);
            if (need_k) dk.noalias() += dm * CMapR(x.data() + t * fs, c, hw).transpose();
            if (need_x) {
              auto gx = tape.grad(ids[0]);
              MapR(gx.data() + t * fs, c, hw).noalias() += kt.transpose() * dm;
            }
          }
          if (need_k) {
            auto gk = tape.grad(ids[1]);
            for (std::size_t o = 0; o < c; ++o)
              for (std::size_t i = 0; i < c; ++i) gk[(o * c + i) * 3 + tau] += dk(o, i);
          }
        }
      });
}

Tensor conv2d_reference(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        std::size_t stride, std::size_t padding) {
  const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  Shape out_shape = input.rank() == 4 ? Shape{g.n, g.cout, g.ho, g.wo}
                                      : Shape{g.cout, g.ho, g.wo};
  Tensor out(out_shape);
  for (std::size_t f = 0; f < g.n; ++f)
    for (std::size_t o = 0; o < g.cout; ++o)
      for (std::size_t oy = 0; oy < g.ho; ++oy)
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < g.cin; ++c)
            for (std::size_t ky = 0; ky < g.kh; ++ky)
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                static_cast<std::ptrdiff_t>(g.pad);
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.w))
                  continue;
                acc += kernel[((o * g.cin + c) * g.kh + ky) * g.kw + kx] *
                       input[((f * g.cin + c) * g.h + static_cast<std::size_t>(iy)) * g.w +
                             static_cast<std::size_t>(ix)];
              }
          out[((f * g.cout + o) * g.ho + oy) * g.wo + ox] = acc;
        }
  return out;
}

Tensor conv3d_t3_reference(const Tensor& input, const Tensor& kernel, std::size_t segment_len) {
  check_temporal_kernel(input.shape(), kernel.shape(), "conv3d_t3");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const std::size_t seg = segment_len == 0 ? n : segment_len;
  Tensor out(input.shape());
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t o = 0; o < c; ++o)
      for (std::size_t p = 0; p < hw; ++p) {
        double acc = 0.0;
        for (std::size_t tau = 0; tau < 3; ++tau) {
          const auto src = static_cast<std::ptrdiff_t>(t % seg) + static_cast<std::ptrdiff_t>(tau) - 1;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(seg)) continue;
          const std::size_t frame = t - t % seg + static_cast<std::size_t>(src);
          for (std::size_t i = 0; i < c; ++i)
            acc += kernel[(o * c + i) * 3 + tau] * input[(frame * c + i) * hw + p];
        }
        out[(t * c + o) * hw + p] = acc;
      }
  return out;
}

}  // namespace scn
