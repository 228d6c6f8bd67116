// Benchmark of the OpenMP kernels against the serial reference. Verifies
// bitwise agreement on each case, then reports median wall time and speedup.

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "aftlab/kernels.hpp"
#include "aftlab/rng.hpp"

namespace k = aftlab::kernels;

namespace {

std::vector<double> random_buffer(aftlab::Rng& rng, size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

double median_seconds(const std::function<void()>& fn, int repeats) {
  fn();  // warm-up
  std::vector<double> times;
  for (int i = 0; i < repeats; ++i) {
    const double t0 = omp_get_wtime();
    fn();
    times.push_back(omp_get_wtime() - t0);
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void report(const std::string& name, const std::function<void()>& par,
            const std::function<void()>& ser, bool bitwise_ok) {
  const double tp = median_seconds(par, 5);
  const double ts = median_seconds(ser, 5);
  std::printf("%-28s serial %9.4f ms   omp %9.4f ms   speedup %5.2fx   bitwise %s\n",
              name.c_str(), ts * 1e3, tp * 1e3, ts / tp, bitwise_ok ? "ok" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  aftlab::Rng rng(4711);

  for (int64_t n : {128, 256, 512}) {
    auto a = random_buffer(rng, static_cast<size_t>(n * n));
    auto b = random_buffer(rng, static_cast<size_t>(n * n));
    std::vector<double> y1(static_cast<size_t>(n * n)), y2(y1.size());
    k::matmul(a.data(), b.data(), y1.data(), n, n, n);
    k::ref::matmul(a.data(), b.data(), y2.data(), n, n, n);
    const bool ok = std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0;
    report("matmul " + std::to_string(n) + "^3",
           [&] { k::matmul(a.data(), b.data(), y1.data(), n, n, n); },
           [&] { k::ref::matmul(a.data(), b.data(), y2.data(), n, n, n); }, ok);
  }

  {
    const int64_t n = 32, c = 8, h = 28, w = 28, f = 16, kh = 3, kw = 3;
    const int64_t oh = h - kh + 1, ow = w - kw + 1;
    auto x = random_buffer(rng, static_cast<size_t>(n * c * h * w));
    auto krn = random_buffer(rng, static_cast<size_t>(f * c * kh * kw));
    auto g = random_buffer(rng, static_cast<size_t>(n * f * oh * ow));
    std::vector<double> y1(g.size()), y2(g.size());
    k::conv2d(x.data(), krn.data(), y1.data(), n, c, h, w, f, kh, kw);
    k::ref::conv2d(x.data(), krn.data(), y2.data(), n, c, h, w, f, kh, kw);
    bool ok = std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0;
    report("conv2d 32x8x28x28 f16",
           [&] { k::conv2d(x.data(), krn.data(), y1.data(), n, c, h, w, f, kh, kw); },
           [&] { k::ref::conv2d(x.data(), krn.data(), y2.data(), n, c, h, w, f, kh, kw); }, ok);

    std::vector<double> gi1(x.size()), gi2(x.size());
    k::conv2d_input_grad(g.data(), krn.data(), gi1.data(), n, c, h, w, f, kh, kw);
    k::ref::conv2d_input_grad(g.data(), krn.data(), gi2.data(), n, c, h, w, f, kh, kw);
    ok = std::memcmp(gi1.data(), gi2.data(), gi1.size() * sizeof(double)) == 0;
    report("conv2d_input_grad",
           [&] { k::conv2d_input_grad(g.data(), krn.data(), gi1.data(), n, c, h, w, f, kh, kw); },
           [&] {
             k::ref::conv2d_input_grad(g.data(), krn.data(), gi2.data(), n, c, h, w, f, kh, kw);
           },
           ok);

    std::vector<double> gk1(krn.size()), gk2(krn.size());
    k::conv2d_kernel_grad(x.data(), g.data(), gk1.data(), n, c, h, w, f, kh, kw);
    k::ref::conv2d_kernel_grad(x.data(), g.data(), gk2.data(), n, c, h, w, f, kh, kw);
    ok = std::memcmp(gk1.data(), gk2.data(), gk1.size() * sizeof(double)) == 0;
    report("conv2d_kernel_grad",
           [&] { k::conv2d_kernel_grad(x.data(), g.data(), gk1.data(), n, c, h, w, f, kh, kw); },
           [&] {
             k::ref::conv2d_kernel_grad(x.data(), g.data(), gk2.data(), n, c, h, w, f, kh, kw);
           },
           ok);
  }

  return 0;
}
