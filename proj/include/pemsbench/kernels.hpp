#pragma once

#include <cstdint>

namespace pemsbench::kernels {

// Data-parallel double-precision primitives behind the model and metric
// code. Two implementations exist: a scalar reference (the semantic ground
// truth, kept deliberately simple) and an AVX2+FMA variant selected at
// runtime on x86-64. Both are compiled in; the active one is chosen once at
// startup and can be forced with force_backend() or the environment variable
// PEMSBENCH_KERNELS=scalar|avx2. Accumulation order is fixed within each
// backend, so results are reproducible per backend; the two backends agree
// to rounding error and are equivalence-tested against each other.

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name();
bool avx2_available();

// Throws ConfigError if the requested backend is unavailable on this CPU.
void force_backend(Backend b);

struct Kernels {
    // Row-major matrix products, C overwritten.
    // nn: C[m,n] = A[m,k] * B[k,n]
    // nt: C[m,n] = A[m,k] * B[n,k]^T
    // tn: C[m,n] = A[k,m]^T * B[k,n]
    void (*matmul_nn)(const double* a, const double* b, double* c, int m,
                      int k, int n);
    void (*matmul_nt)(const double* a, const double* b, double* c, int m,
                      int k, int n);
    void (*matmul_tn)(const double* a, const double* b, double* c, int m,
                      int k, int n);

    double (*dot)(const double* a, const double* b, std::int64_t n);
    double (*sum)(const double* a, std::int64_t n);
    double (*sumsq)(const double* a, std::int64_t n);
    // sum |y_i - yhat_i| and sum (y_i - yhat_i)^2
    double (*abs_err_sum)(const double* y, const double* yhat, std::int64_t n);
    double (*sq_err_sum)(const double* y, const double* yhat, std::int64_t n);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::int64_t n);

    // Decoupled-weight-decay Adam step over one parameter block, with
    // bias-corrected step size baked into `lr_t` by the caller:
    //   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
    //   p -= lr_t * m / (sqrt(v / bc2) + eps) + lr * wd * p
    // where bc2 is the beta2 bias correction for the current step.
    void (*adamw_update)(double* p, double* m, double* v, const double* g,
                         std::int64_t n, double lr, double lr_t, double beta1,
                         double beta2, double bc2, double eps,
                         double weight_decay);
};

// Table of the active backend's function pointers.
const Kernels& active();

// Explicit tables, used by the equivalence tests.
const Kernels& scalar_kernels();
const Kernels& avx2_kernels(); // valid only when avx2_available()

} // namespace pemsbench::kernels
