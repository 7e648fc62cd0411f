#include "pemsbench/kernels.hpp"

#include <cmath>
#include <cstring>

// Reference kernels. Plain loops, one accumulator, no reassociation: this is
// the semantic definition the SIMD variants are tested against.

namespace pemsbench::kernels {
namespace {

void matmul_nn_scalar(const double* a, const double* b, double* c, int m,
                      int k, int n) {
    std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::int64_t>(i) * k;
        double* crow = c + static_cast<std::int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
}

void matmul_nt_scalar(const double* a, const double* b, double* c, int m,
                      int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::int64_t>(i) * k;
        double* crow = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::int64_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] = acc;
        }
    }
}

void matmul_tn_scalar(const double* a, const double* b, double* c, int m,
                      int k, int n) {
    std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::int64_t>(p) * m;
        const double* brow = b + static_cast<std::int64_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double api = arow[i];
            double* crow = c + static_cast<std::int64_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += api * brow[j];
            }
        }
    }
}

double dot_scalar(const double* a, const double* b, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_scalar(const double* a, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double sumsq_scalar(const double* a, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

double abs_err_sum_scalar(const double* y, const double* yhat,
                          std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += std::fabs(y[i] - yhat[i]);
    return acc;
}

double sq_err_sum_scalar(const double* y, const double* yhat, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = y[i] - yhat[i];
        acc += d * d;
    }
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adamw_update_scalar(double* p, double* m, double* v, const double* g,
                         std::int64_t n, double lr, double lr_t, double beta1,
                         double beta2, double bc2, double eps,
                         double weight_decay) {
    for (std::int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double denom = std::sqrt(v[i] / bc2) + eps;
        p[i] -= lr_t * m[i] / denom + lr * weight_decay * p[i];
    }
}

} // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        matmul_nn_scalar, matmul_nt_scalar,    matmul_tn_scalar,
        dot_scalar,       sum_scalar,          sumsq_scalar,
        abs_err_sum_scalar, sq_err_sum_scalar, axpy_scalar,
        adamw_update_scalar,
    };
    return k;
}

} // namespace pemsbench::kernels
