#pragma once

#include <cstdint>

namespace aftlab::kernels {

// Dense numeric kernels behind the autodiff ops. Parallel variants partition
// work by output element only: every output element is accumulated in the
// same inner-loop order as the serial reference, so results are bitwise
// identical regardless of thread count.

/// y[m×n] = a[m×k] · b[k×n]
void matmul(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n);

/// y[cols×rows] = transpose of x[rows×cols]
void transpose2d(const double* x, double* y, int64_t rows, int64_t cols);

/// Valid cross-correlation, stride 1, no padding.
/// x[n×c×h×w], k[f×c×kh×kw] -> y[n×f×(h-kh+1)×(w-kw+1)]
void conv2d(const double* x, const double* krn, double* y, int64_t n, int64_t c, int64_t h,
            int64_t w, int64_t f, int64_t kh, int64_t kw);

/// Adjoint of conv2d in its input: g[n×f×oh×ow], k[f×c×kh×kw] -> y[n×c×h×w]
/// with h = oh+kh-1, w = ow+kw-1.
void conv2d_input_grad(const double* g, const double* krn, double* y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t f, int64_t kh, int64_t kw);

/// Adjoint of conv2d in its kernel: x[n×c×h×w], g[n×f×oh×ow] -> y[f×c×kh×kw].
void conv2d_kernel_grad(const double* x, const double* g, double* y, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t f, int64_t kh, int64_t kw);

/// Row sums: x[rows×cols] -> y[rows].
void sum_rows(const double* x, double* y, int64_t rows, int64_t cols);

/// Sum over all axes except axis 1: x[d0×f×rest] -> y[f].
void reduce_to_axis1(const double* x, double* y, int64_t d0, int64_t f, int64_t rest);

// Serial reference implementations, kept as the oracle for the parallel
// kernels above (see tests/test_kernels.cpp and tools/bench_kernels.cpp).
namespace ref {
void matmul(const double* a, const double* b, double* y, int64_t m, int64_t k, int64_t n);
void transpose2d(const double* x, double* y, int64_t rows, int64_t cols);
void conv2d(const double* x, const double* krn, double* y, int64_t n, int64_t c, int64_t h,
            int64_t w, int64_t f, int64_t kh, int64_t kw);
void conv2d_input_grad(const double* g, const double* krn, double* y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t f, int64_t kh, int64_t kw);
void conv2d_kernel_grad(const double* x, const double* g, double* y, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t f, int64_t kh, int64_t kw);
void sum_rows(const double* x, double* y, int64_t rows, int64_t cols);
void reduce_to_axis1(const double* x, double* y, int64_t d0, int64_t f, int64_t rest);
}  // namespace ref

}  // namespace aftlab::kernels
