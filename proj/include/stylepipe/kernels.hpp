#pragma once

#include <cstdint>

#include "stylepipe/common.hpp"

// Dense numeric loops shared by the tensor ops. Every kernel comes in a
// serial reference form and an OpenMP form; the parallel form distributes
// whole output elements across threads and keeps each element's reduction
// order identical to the serial form, so both backends produce bit-equal
// results. Tests assert that equality; the bench tool measures the gap.
namespace stylepipe::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend b);
Backend backend();
int max_threads();

// C[m,p] = A[m,k] * B[k,p], optionally accumulating into C.
void matmul_nn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t p,
               bool accumulate = false);
// C[m,k] = A[m,p] * B[k,p]^T
void matmul_nt(const real* a, const real* b, real* c, int64_t m, int64_t p, int64_t k,
               bool accumulate = false);
// C[k,p] = A[m,k]^T * B[m,p]
void matmul_tn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t p,
               bool accumulate = false);

// row-wise softmax with max subtraction
void softmax_rows(const real* x, real* y, int64_t rows, int64_t cols);
// dx = (dy - rowdot(dy, y)) * y
void softmax_rows_backward(const real* y, const real* dy, real* dx, int64_t rows, int64_t cols);

// y = (x - mean) * rstd * gain + bias per row; saves mean/rstd for backward
void layernorm_rows(const real* x, const real* gain, const real* bias, real* y, real* mean,
                    real* rstd, int64_t rows, int64_t cols, real eps);
void layernorm_rows_backward(const real* x, const real* gain, const real* mean, const real* rstd,
                             const real* dy, real* dx, real* dgain, real* dbias, int64_t rows,
                             int64_t cols);

// exact erf-based GELU
void gelu(const real* x, real* y, int64_t n);
void gelu_backward(const real* x, const real* dy, real* dx, int64_t n);

void add(const real* a, const real* b, real* c, int64_t n);
void sub(const real* a, const real* b, real* c, int64_t n);
void mul(const real* a, const real* b, real* c, int64_t n);
void axpy(real alpha, const real* x, real* y, int64_t n);  // y += alpha * x
void scale(const real* x, real alpha, real* y, int64_t n);
void fill(real* x, real v, int64_t n);
void copy(const real* x, real* y, int64_t n);

// sequential reduction in index order regardless of backend
real sum(const real* x, int64_t n);

}  // namespace stylepipe::kernels
