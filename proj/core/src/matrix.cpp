#include "abip/matrix.hpp"

#include <cassert>
#include <thread>
#include <vector>

namespace abip {
namespace {

// Splits [0, rows) into contiguous blocks and runs fn(begin, end) on each,
// one block per thread. Each output row is written by exactly one thread.
template <class Fn>
void parallel_rows(std::size_t rows, int threads, Fn&& fn) {
  if (threads <= 1 || rows < 2) {
    fn(std::size_t{0}, rows);
    return;
  }
  std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(threads), rows);
  std::vector<std::thread> pool;
  pool.reserve(n);
  std::size_t chunk = (rows + n - 1) / n;
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t begin = t * chunk;
    std::size_t end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate, int threads) {
  assert(a.cols() == b.rows() && c.rows() == a.rows() && c.cols() == b.cols());
  const std::size_t m = a.rows(), kk = a.cols(), n = b.cols();
  parallel_rows(m, threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* ci = c.data() + i * n;
      if (!accumulate)
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
      const double* ai = a.data() + i * kk;
      for (std::size_t k = 0; k < kk; ++k) {
        const double aik = ai[k];
        const double* bk = b.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
      }
    }
  });
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate, int threads) {
  assert(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols());
  const std::size_t m = a.cols(), kk = a.rows(), n = b.cols();
  parallel_rows(m, threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* ci = c.data() + i * n;
      if (!accumulate)
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
      for (std::size_t k = 0; k < kk; ++k) {
        const double aki = a(k, i);
        const double* bk = b.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
      }
    }
  });
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate, int threads) {
  assert(a.cols() == b.cols() && c.rows() == a.rows() && c.cols() == b.rows());
  const std::size_t m = a.rows(), kk = a.cols(), n = b.rows();
  parallel_rows(m, threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* ci = c.data() + i * n;
      const double* ai = a.data() + i * kk;
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b.data() + j * kk;
        double acc = accumulate ? ci[j] : 0.0;
        for (std::size_t k = 0; k < kk; ++k) acc += ai[k] * bj[k];
        ci[j] = acc;
      }
    }
  });
}

}  // namespace abip
