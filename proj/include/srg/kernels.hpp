#pragma once

// Raw dense kernels behind the autodiff ops. Every kernel exists twice:
// `serial` is the straightforward nested-loop reference, `parallel` is the
// OpenMP version used by the engine. Each output element of a parallel
// kernel is owned by one thread and accumulated in a fixed order, so results
// do not depend on the thread count.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace srg::kernels {

/// Caps the OpenMP team size (0 restores the runtime default).
void set_max_threads(int n);
int max_threads();

struct Conv1dDims {
  std::size_t c_in = 1;
  std::size_t t_in = 1;
  std::size_t c_out = 1;
  std::size_t k = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t t_out() const { return (t_in + 2 * pad - k) / stride + 1; }
};

struct PoolDims {
  std::size_t channels = 1;
  std::size_t t_in = 1;
  std::size_t k = 1;
  std::size_t stride = 1;

  std::size_t t_out() const { return (t_in - k) / stride + 1; }
};

namespace serial {

template <typename T>
void conv1d_forward(const Conv1dDims& d, std::span<const T> x, std::span<const T> w, std::span<T> y) {
  const std::size_t t_out = d.t_out();
  for (std::size_t o = 0; o < d.c_out; ++o) {
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d.c_in; ++c) {
        for (std::size_t k = 0; k < d.k; ++k) {
          const long u = static_cast<long>(t * d.stride + k) - static_cast<long>(d.pad);
          if (u < 0 || u >= static_cast<long>(d.t_in)) continue;
          acc += static_cast<double>(w[(o * d.c_in + c) * d.k + k]) * x[c * d.t_in + u];
        }
      }
      y[o * t_out + t] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void conv1d_backward_input(const Conv1dDims& d, std::span<const T> w, std::span<const T> gy, std::span<T> gx) {
  const std::size_t t_out = d.t_out();
  for (std::size_t o = 0; o < d.c_out; ++o) {
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t c = 0; c < d.c_in; ++c) {
        for (std::size_t k = 0; k < d.k; ++k) {
          const long u = static_cast<long>(t * d.stride + k) - static_cast<long>(d.pad);
          if (u < 0 || u >= static_cast<long>(d.t_in)) continue;
          gx[c * d.t_in + u] += w[(o * d.c_in + c) * d.k + k] * gy[o * t_out + t];
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const T> x, std::span<const T> gy, std::span<T> gw) {
  const std::size_t t_out = d.t_out();
  for (std::size_t o = 0; o < d.c_out; ++o) {
    for (std::size_t c = 0; c < d.c_in; ++c) {
      for (std::size_t k = 0; k < d.k; ++k) {
        double acc = 0.0;
        for (std::size_t t = 0; t < t_out; ++t) {
          const long u = static_cast<long>(t * d.stride + k) - static_cast<long>(d.pad);
          if (u < 0 || u >= static_cast<long>(d.t_in)) continue;
          acc += static_cast<double>(gy[o * t_out + t]) * x[c * d.t_in + u];
        }
        gw[(o * d.c_in + c) * d.k + k] += static_cast<T>(acc);
      }
    }
  }
}

/// c[m×n] = a[m×k] · b[k×n]
template <typename T>
void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
            std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void avg_pool_forward(const PoolDims& d, std::span<const T> x, std::span<T> y) {
  const std::size_t t_out = d.t_out();
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d.k; ++k) acc += x[c * d.t_in + t * d.stride + k];
      y[c * t_out + t] = static_cast<T>(acc / static_cast<double>(d.k));
    }
  }
}

/// Writes the window maximum and the flat input index it came from (first index on ties).
template <typename T>
void max_pool_forward(const PoolDims& d, std::span<const T> x, std::span<T> y, std::span<std::size_t> argmax) {
  const std::size_t t_out = d.t_out();
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t t = 0; t < t_out; ++t) {
      std::size_t best = c * d.t_in + t * d.stride;
      for (std::size_t k = 1; k < d.k; ++k) {
        const std::size_t idx = c * d.t_in + t * d.stride + k;
        if (x[idx] > x[best]) best = idx;
      }
      y[c * t_out + t] = x[best];
      argmax[c * t_out + t] = best;
    }
  }
}

}  // namespace serial

namespace parallel {

template <typename T>
void conv1d_forward(const Conv1dDims& d, std::span<const T> x, std::span<const T> w, std::span<T> y) {
  const std::size_t t_out = d.t_out();
  const long c_out = static_cast<long>(d.c_out);
#pragma omp parallel for schedule(static)
  for (long oi = 0; oi < c_out; ++oi) {
    const std::size_t o = static_cast<std::size_t>(oi);
    for (std::size_t t = 0; t < t_out; ++t) {
      const long base = static_cast<long>(t * d.stride) - static_cast<long>(d.pad);
      const std::size_t k_lo = base < 0 ? static_cast<std::size_t>(-base) : 0;
      const long hi = std::min<long>(static_cast<long>(d.k), static_cast<long>(d.t_in) - base);
      const std::size_t k_hi = hi < static_cast<long>(k_lo) ? k_lo : static_cast<std::size_t>(hi);
      double acc = 0.0;
      for (std::size_t c = 0; c < d.c_in; ++c) {
        const T* wrow = w.data() + (o * d.c_in + c) * d.k;
        const T* xrow = x.data() + c * d.t_in;
        for (std::size_t k = k_lo; k < k_hi; ++k) {
          acc += static_cast<double>(wrow[k]) * xrow[base + static_cast<long>(k)];
        }
      }
      y[o * t_out + t] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void conv1d_backward_input(const Conv1dDims& d, std::span<const T> w, std::span<const T> gy, std::span<T> gx) {
  const std::size_t t_out = d.t_out();
  const long c_in = static_cast<long>(d.c_in);
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < c_in; ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    for (std::size_t u = 0; u < d.t_in; ++u) {
      // Output positions t with t*stride + k - pad == u for some tap k.
      double acc = 0.0;
      for (std::size_t o = 0; o < d.c_out; ++o) {
        const T* wrow = w.data() + (o * d.c_in + c) * d.k;
        for (std::size_t k = 0; k < d.k; ++k) {
          const long num = static_cast<long>(u + d.pad) - static_cast<long>(k);
          if (num < 0 || num % static_cast<long>(d.stride) != 0) continue;
          const std::size_t t = static_cast<std::size_t>(num) / d.stride;
          if (t >= t_out) continue;
          acc += static_cast<double>(wrow[k]) * gy[o * t_out + t];
        }
      }
      gx[c * d.t_in + u] += static_cast<T>(acc);
    }
  }
}

template <typename T>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const T> x, std::span<const T> gy, std::span<T> gw) {
  const std::size_t t_out = d.t_out();
  const long c_out = static_cast<long>(d.c_out);
#pragma omp parallel for schedule(static)
  for (long oi = 0; oi < c_out; ++oi) {
    const std::size_t o = static_cast<std::size_t>(oi);
    const T* gyrow = gy.data() + o * t_out;
    for (std::size_t c = 0; c < d.c_in; ++c) {
      const T* xrow = x.data() + c * d.t_in;
      for (std::size_t k = 0; k < d.k; ++k) {
        double acc = 0.0;
        for (std::size_t t = 0; t < t_out; ++t) {
          const long u = static_cast<long>(t * d.stride + k) - static_cast<long>(d.pad);
          if (u < 0 || u >= static_cast<long>(d.t_in)) continue;
          acc += static_cast<double>(gyrow[t]) * xrow[u];
        }
        gw[(o * d.c_in + c) * d.k + k] += static_cast<T>(acc);
      }
    }
  }
}

/// c[m×n] = a[m×k] · b[k×n]; row-owned, k accumulated in ascending order.
template <typename T>
void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
            std::span<T> c) {
  const long rows = static_cast<long>(m);
#pragma omp parallel
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        const T* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
      }
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] = static_cast<T>(acc[j]);
    }
  }
}

/// c[m×n] += a[m×k] · b[n×k]ᵀ
template <typename T>
void matmul_nt_acc(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
                   std::span<T> c) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < rows; ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
      c[i * n + j] += static_cast<T>(acc);
    }
  }
}

/// c[m×n] += a[k×m]ᵀ · b[k×n]
template <typename T>
void matmul_tn_acc(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
                   std::span<T> c) {
  const long rows = static_cast<long>(m);
#pragma omp parallel
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        const T* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
      }
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += static_cast<T>(acc[j]);
    }
  }
}

template <typename T>
void avg_pool_forward(const PoolDims& d, std::span<const T> x, std::span<T> y) {
  const std::size_t t_out = d.t_out();
  const long channels = static_cast<long>(d.channels);
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < channels; ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    const T* xrow = x.data() + c * d.t_in;
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d.k; ++k) acc += xrow[t * d.stride + k];
      y[c * t_out + t] = static_cast<T>(acc / static_cast<double>(d.k));
    }
  }
}

template <typename T>
void max_pool_forward(const PoolDims& d, std::span<const T> x, std::span<T> y, std::span<std::size_t> argmax) {
  const std::size_t t_out = d.t_out();
  const long channels = static_cast<long>(d.channels);
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < channels; ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    for (std::size_t t = 0; t < t_out; ++t) {
      const std::size_t start = c * d.t_in + t * d.stride;
      const auto first = x.begin() + static_cast<std::ptrdiff_t>(start);
      // max_element returns the first maximum.
      const auto it = std::max_element(first, first + static_cast<std::ptrdiff_t>(d.k));
      y[c * t_out + t] = *it;
      argmax[c * t_out + t] = start + static_cast<std::size_t>(it - first);
    }
  }
}

/// Gradient of average pooling: each window spreads gy/k uniformly.
template <typename T>
void avg_pool_backward(const PoolDims& d, std::span<const T> gy, std::span<T> gx) {
  const std::size_t t_out = d.t_out();
  const long channels = static_cast<long>(d.channels);
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < channels; ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    for (std::size_t t = 0; t < t_out; ++t) {
      const T share = gy[c * t_out + t] / static_cast<T>(d.k);
      for (std::size_t k = 0; k < d.k; ++k) gx[c * d.t_in + t * d.stride + k] += share;
    }
  }
}

}  // namespace parallel

}  // namespace srg::kernels
