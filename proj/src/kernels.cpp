#include "stylepipe/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stylepipe::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::parallel};

// work thresholds below which the parallel backend stays serial
constexpr int64_t kMatmulGrain = 1 << 15;
constexpr int64_t kRowGrain = 1 << 13;
constexpr int64_t kElemGrain = 1 << 14;

inline bool par(int64_t work, int64_t grain) {
#ifdef _OPENMP
    return g_backend.load(std::memory_order_relaxed) == Backend::parallel && work >= grain;
#else
    (void)work;
    (void)grain;
    return false;
#endif
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul_nn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t p,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (par(m * k * p, kMatmulGrain))
    for (int64_t i = 0; i < m; ++i) {
        real* ci = c + i * p;
        if (!accumulate) std::memset(ci, 0, sizeof(real) * p);
        const real* ai = a + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const real av = ai[kk];
            const real* bk = b + kk * p;
            for (int64_t j = 0; j < p; ++j) ci[j] += av * bk[j];
        }
    }
}

void matmul_nt(const real* a, const real* b, real* c, int64_t m, int64_t p, int64_t k,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (par(m * k * p, kMatmulGrain))
    for (int64_t i = 0; i < m; ++i) {
        const real* ai = a + i * p;
        real* ci = c + i * k;
        for (int64_t j = 0; j < k; ++j) {
            const real* bj = b + j * p;
            real acc = 0;
            for (int64_t l = 0; l < p; ++l) acc += ai[l] * bj[l];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

void matmul_tn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t p,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (par(m * k * p, kMatmulGrain))
    for (int64_t i = 0; i < k; ++i) {
        real* ci = c + i * p;
        if (!accumulate) std::memset(ci, 0, sizeof(real) * p);
        for (int64_t l = 0; l < m; ++l) {
            const real av = a[l * k + i];
            const real* bl = b + l * p;
            for (int64_t j = 0; j < p; ++j) ci[j] += av * bl[j];
        }
    }
}

void softmax_rows(const real* x, real* y, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static) if (par(rows * cols, kRowGrain))
    for (int64_t r = 0; r < rows; ++r) {
        const real* xr = x + r * cols;
        real* yr = y + r * cols;
        real mx = xr[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        real s = 0;
        for (int64_t j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        const real inv = real(1) / s;
        for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

void softmax_rows_backward(const real* y, const real* dy, real* dx, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static) if (par(rows * cols, kRowGrain))
    for (int64_t r = 0; r < rows; ++r) {
        const real* yr = y + r * cols;
        const real* dyr = dy + r * cols;
        real* dxr = dx + r * cols;
        real dot = 0;
        for (int64_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
        for (int64_t j = 0; j < cols; ++j) dxr[j] += (dyr[j] - dot) * yr[j];
    }
}

void layernorm_rows(const real* x, const real* gain, const real* bias, real* y, real* mean,
                    real* rstd, int64_t rows, int64_t cols, real eps) {
#pragma omp parallel for schedule(static) if (par(rows * cols, kRowGrain))
    for (int64_t r = 0; r < rows; ++r) {
        const real* xr = x + r * cols;
        real* yr = y + r * cols;
        real mu = 0;
        for (int64_t j = 0; j < cols; ++j) mu += xr[j];
        mu /= real(cols);
        real var = 0;
        for (int64_t j = 0; j < cols; ++j) {
            const real d = xr[j] - mu;
            var += d * d;
        }
        var /= real(cols);
        const real rs = real(1) / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (int64_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * rs * gain[j] + bias[j];
    }
}

void layernorm_rows_backward(const real* x, const real* gain, const real* mean, const real* rstd,
                             const real* dy, real* dx, real* dgain, real* dbias, int64_t rows,
                             int64_t cols) {
    // dgain/dbias reduce over rows: kept sequential for a fixed summation order
    for (int64_t r = 0; r < rows; ++r) {
        const real* xr = x + r * cols;
        const real* dyr = dy + r * cols;
        for (int64_t j = 0; j < cols; ++j) {
            const real xhat = (xr[j] - mean[r]) * rstd[r];
            dgain[j] += dyr[j] * xhat;
            dbias[j] += dyr[j];
        }
    }
#pragma omp parallel for schedule(static) if (par(rows * cols, kRowGrain))
    for (int64_t r = 0; r < rows; ++r) {
        const real* xr = x + r * cols;
        const real* dyr = dy + r * cols;
        real* dxr = dx + r * cols;
        real dn_mean = 0, dnx_mean = 0;
        for (int64_t j = 0; j < cols; ++j) {
            const real xhat = (xr[j] - mean[r]) * rstd[r];
            const real dn = dyr[j] * gain[j];
            dn_mean += dn;
            dnx_mean += dn * xhat;
        }
        dn_mean /= real(cols);
        dnx_mean /= real(cols);
        for (int64_t j = 0; j < cols; ++j) {
            const real xhat = (xr[j] - mean[r]) * rstd[r];
            const real dn = dyr[j] * gain[j];
            dxr[j] += (dn - dn_mean - xhat * dnx_mean) * rstd[r];
        }
    }
}

namespace {
constexpr real kInvSqrt2 = real(0.7071067811865475244);
constexpr real kInvSqrt2Pi = real(0.3989422804014326779);
}  // namespace

void gelu(const real* x, real* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n, kElemGrain))
    for (int64_t i = 0; i < n; ++i)
        y[i] = real(0.5) * x[i] * (real(1) + std::erf(x[i] * kInvSqrt2));
}

void gelu_backward(const real* x, const real* dy, real* dx, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n, kElemGrain))
    for (int64_t i = 0; i < n; ++i) {
        const real cdf = real(0.5) * (real(1) + std::erf(x[i] * kInvSqrt2));
        const real pdf = kInvSqrt2Pi * std::exp(real(-0.5) * x[i] * x[i]);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

void add(const real* a, const real* b, real* c, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n, kElemGrain))
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void sub(const real* a, const real* b, real* c, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n, kElemGrain))
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void mul(const real* a, const real* b, real* c, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n, kElemGrain))
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void axpy(real alpha, const real* x, real* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n, kElemGrain))
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const real* x, real alpha, real* y, int64_t n) {
#pragma omp parallel for schedule(static) if (par(n, kElemGrain))
    for (int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void fill(real* x, real v, int64_t n) {
    for (int64_t i = 0; i < n; ++i) x[i] = v;
}

void copy(const real* x, real* y, int64_t n) { std::memcpy(y, x, sizeof(real) * n); }

real sum(const real* x, int64_t n) {
    real s = 0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

}  // namespace stylepipe::kernels
