#ifndef SONARGEN_NN_IM2COL_HPP
#define SONARGEN_NN_IM2COL_HPP

#include "sonargen/nn/tensor.hpp"

#include <vector>

namespace sonargen::nn {

enum class PadMode { zero, reflect };

/// Geometry of a square-kernel convolution from a "large" grid (in) to a
/// "small" grid (out). Transposed convolutions reuse it with roles swapped.
struct ConvGeometry {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int kernel = 1, stride = 1, pad = 0;
  PadMode mode = PadMode::zero;

  static ConvGeometry make(int in_h, int in_w, int kernel, int stride, int pad, PadMode mode) {
    ConvGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.kernel = kernel;
    g.stride = stride;
    g.pad = pad;
    g.mode = mode;
    g.out_h = (in_h + 2 * pad - kernel) / stride + 1;
    g.out_w = (in_w + 2 * pad - kernel) / stride + 1;
    if (g.out_h < 1 || g.out_w < 1) {
      throw ShapeError("convolution input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                       " too small for kernel " + std::to_string(kernel));
    }
    if (mode == PadMode::reflect && (pad >= in_h || pad >= in_w)) {
      throw ShapeError("reflection padding larger than input");
    }
    return g;
  }

  /// Source index along one axis for output position `o` and kernel tap `k`;
  /// -1 means the tap falls in zero padding.
  static int source(int o, int k, int stride, int pad, int n, PadMode mode) {
    int i = o * stride - pad + k;
    if (i >= 0 && i < n) return i;
    if (mode == PadMode::zero) return -1;
    if (i < 0) return -i;
    return 2 * (n - 1) - i;
  }

  std::vector<int> row_table() const { return table(out_h, in_h); }
  std::vector<int> col_table() const { return table(out_w, in_w); }

 private:
  std::vector<int> table(int out_n, int in_n) const {
    std::vector<int> t(static_cast<size_t>(kernel) * out_n);
    for (int k = 0; k < kernel; ++k)
      for (int o = 0; o < out_n; ++o) t[size_t(k) * out_n + o] = source(o, k, stride, pad, in_n, mode);
    return t;
  }
};

/// Gathers patches for output rows [row_begin, row_end) into a
/// ((row_end-row_begin)*out_w) x (C*k*k) matrix. Column = c*k*k + ky*k + kx.
template <typename Scalar>
void im2col(const ConvGeometry& g, const Matrix<Scalar>& x, int row_begin, int row_end,
            const std::vector<int>& rows, const std::vector<int>& cols, Matrix<Scalar>& out) {
  const int k = g.kernel;
  const int channels = static_cast<int>(x.cols());
  const Eigen::Index n_rows = Eigen::Index(row_end - row_begin) * g.out_w;
  out.resize(n_rows, Eigen::Index(channels) * k * k);
  for (int c = 0; c < channels; ++c) {
    const Scalar* src = x.col(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = out.col(Eigen::Index(c) * k * k + ky * k + kx).data();
        const int* ctab = cols.data() + size_t(kx) * g.out_w;
        for (int oy = row_begin; oy < row_end; ++oy) {
          const int iy = rows[size_t(ky) * g.out_h + oy];
          Scalar* d = dst + Eigen::Index(oy - row_begin) * g.out_w;
          if (iy < 0) {
            for (int ox = 0; ox < g.out_w; ++ox) d[ox] = Scalar(0);
            continue;
          }
          const Scalar* s = src + Eigen::Index(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ctab[ox];
            d[ox] = ix < 0 ? Scalar(0) : s[ix];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters patch columns back onto the large grid,
/// accumulating into `x` (which must already be sized in_h*in_w x C).
template <typename Scalar>
void col2im(const ConvGeometry& g, const Matrix<Scalar>& patches, int row_begin, int row_end,
            const std::vector<int>& rows, const std::vector<int>& cols, Matrix<Scalar>& x) {
  const int k = g.kernel;
  const int channels = static_cast<int>(x.cols());
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = x.col(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = patches.col(Eigen::Index(c) * k * k + ky * k + kx).data();
        const int* ctab = cols.data() + size_t(kx) * g.out_w;
        for (int oy = row_begin; oy < row_end; ++oy) {
          const int iy = rows[size_t(ky) * g.out_h + oy];
          if (iy < 0) continue;
          const Scalar* s = src + Eigen::Index(oy - row_begin) * g.out_w;
          Scalar* d = dst + Eigen::Index(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ctab[ox];
            if (ix >= 0) d[ix] += s[ox];
          }
        }
      }
    }
  }
}

/// Output rows per chunk so that a patch matrix stays under ~32 MB.
inline int chunk_rows(const ConvGeometry& g, int patch_cols, size_t scalar_bytes) {
  const size_t budget = size_t(32) << 20;
  const size_t per_row = size_t(g.out_w) * size_t(patch_cols) * scalar_bytes;
  int rows = static_cast<int>(budget / (per_row ? per_row : 1));
  if (rows < 1) rows = 1;
  return rows < g.out_h ? rows : g.out_h;
}

}  // namespace sonargen::nn

#endif  // SONARGEN_NN_IM2COL_HPP
