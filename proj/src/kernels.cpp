#include "aftlab/kernels.hpp"

namespace aftlab::kernels {

namespace {
// Below this much work the fork/join overhead dominates; the `if` clause
// keeps tiny tensors on one thread without changing any arithmetic.
constexpr int64_t kParCutoff = 1 << 14;
}  // namespace

void matmul(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for if (m * k * n > kParCutoff) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      y[i * n + j] = acc;
    }
  }
}

void transpose2d(const double* x, double* y, int64_t rows, int64_t cols) {
#pragma omp parallel for if (rows * cols > kParCutoff) schedule(static)
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) y[j * rows + i] = x[i * cols + j];
}

void conv2d(const double* x, const double* krn, double* y, int64_t n, int64_t c, int64_t h,
            int64_t w, int64_t f, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = w - kw + 1;
#pragma omp parallel for collapse(2) if (n * f * oh * ow * c * kh * kw > kParCutoff) \
    schedule(static)
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t of = 0; of < f; ++of) {
      for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int64_t ic = 0; ic < c; ++ic)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx)
                acc += x[((in * c + ic) * h + oy + ky) * w + ox + kx] *
                       krn[((of * c + ic) * kh + ky) * kw + kx];
          y[((in * f + of) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

void conv2d_input_grad(const double* g, const double* krn, double* y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t f, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = w - kw + 1;
#pragma omp parallel for collapse(2) if (n * c * h * w * f > kParCutoff) schedule(static)
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ic = 0; ic < c; ++ic) {
      for (int64_t iy = 0; iy < h; ++iy) {
        for (int64_t ix = 0; ix < w; ++ix) {
          double acc = 0.0;
          for (int64_t of = 0; of < f; ++of)
            for (int64_t ky = 0; ky < kh; ++ky) {
              const int64_t oy = iy - ky;
              if (oy < 0 || oy >= oh) continue;
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t ox = ix - kx;
                if (ox < 0 || ox >= ow) continue;
                acc += g[((in * f + of) * oh + oy) * ow + ox] *
                       krn[((of * c + ic) * kh + ky) * kw + kx];
              }
            }
          y[((in * c + ic) * h + iy) * w + ix] = acc;
        }
      }
    }
  }
}

void conv2d_kernel_grad(const double* x, const double* g, double* y, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t f, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = w - kw + 1;
#pragma omp parallel for collapse(2) if (f * c * kh * kw * n > kParCutoff) schedule(static)
  for (int64_t of = 0; of < f; ++of) {
    for (int64_t ic = 0; ic < c; ++ic) {
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int64_t in = 0; in < n; ++in)
            for (int64_t oy = 0; oy < oh; ++oy)
              for (int64_t ox = 0; ox < ow; ++ox)
                acc += x[((in * c + ic) * h + oy + ky) * w + ox + kx] *
                       g[((in * f + of) * oh + oy) * ow + ox];
          y[((of * c + ic) * kh + ky) * kw + kx] = acc;
        }
      }
    }
  }
}

void sum_rows(const double* x, double* y, int64_t rows, int64_t cols) {
#pragma omp parallel for if (rows * cols > kParCutoff) schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < cols; ++j) acc += x[i * cols + j];
    y[i] = acc;
  }
}

void reduce_to_axis1(const double* x, double* y, int64_t d0, int64_t f, int64_t rest) {
#pragma omp parallel for if (d0 * f * rest > kParCutoff) schedule(static)
  for (int64_t j = 0; j < f; ++j) {
    double acc = 0.0;
    for (int64_t i = 0; i < d0; ++i)
      for (int64_t r = 0; r < rest; ++r) acc += x[(i * f + j) * rest + r];
    y[j] = acc;
  }
}

}  // namespace aftlab::kernels
