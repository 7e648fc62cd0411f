// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be reached through the runtime dispatcher.

#if defined(__x86_64__) || defined(_M_X64)

#include "pemsbench/kernels.hpp"

#include <cmath>
#include <cstring>
#include <immintrin.h>

namespace pemsbench::kernels {
namespace {

inline double hsum(__m256d v) {
    // Fixed lane order keeps results reproducible run to run.
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, v);
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

inline __m256d abs_pd(__m256d v) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFll));
    return _mm256_and_pd(v, mask);
}

// Shared inner routine for nn/tn: C[i, :] += broadcast(a_ip) * B[p, :] with
// a 16-column register block held across the k loop.
template <typename LoadA>
void matmul_rowmajor(const double* b, double* c, int m, int k, int n,
                     LoadA load_a) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::int64_t>(i) * n;
        int j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256d c0 = _mm256_setzero_pd();
            __m256d c1 = _mm256_setzero_pd();
            __m256d c2 = _mm256_setzero_pd();
            __m256d c3 = _mm256_setzero_pd();
            for (int p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(load_a(i, p));
                const double* brow = b + static_cast<std::int64_t>(p) * n + j;
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 0), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
                c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
                c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
            }
            _mm256_storeu_pd(crow + j + 0, c0);
            _mm256_storeu_pd(crow + j + 4, c1);
            _mm256_storeu_pd(crow + j + 8, c2);
            _mm256_storeu_pd(crow + j + 12, c3);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = _mm256_setzero_pd();
            for (int p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(load_a(i, p));
                c0 = _mm256_fmadd_pd(
                    av, _mm256_loadu_pd(b + static_cast<std::int64_t>(p) * n + j),
                    c0);
            }
            _mm256_storeu_pd(crow + j, c0);
        }
        for (; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += load_a(i, p) * b[static_cast<std::int64_t>(p) * n + j];
            }
            crow[j] = acc;
        }
    }
}

void matmul_nn_avx2(const double* a, const double* b, double* c, int m, int k,
                    int n) {
    matmul_rowmajor(b, c, m, k, n, [a, k](int i, int p) {
        return a[static_cast<std::int64_t>(i) * k + p];
    });
}

void matmul_tn_avx2(const double* a, const double* b, double* c, int m, int k,
                    int n) {
    matmul_rowmajor(b, c, m, k, n, [a, m](int i, int p) {
        return a[static_cast<std::int64_t>(p) * m + i];
    });
}

void matmul_nt_avx2(const double* a, const double* b, double* c, int m, int k,
                    int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::int64_t>(i) * k;
        double* crow = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::int64_t>(j) * k;
            __m256d acc0 = _mm256_setzero_pd();
            __m256d acc1 = _mm256_setzero_pd();
            int p = 0;
            for (; p + 8 <= k; p += 8) {
                acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                                       _mm256_loadu_pd(brow + p), acc0);
                acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p + 4),
                                       _mm256_loadu_pd(brow + p + 4), acc1);
            }
            for (; p + 4 <= k; p += 4) {
                acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                                       _mm256_loadu_pd(brow + p), acc0);
            }
            double acc = hsum(_mm256_add_pd(acc0, acc1));
            for (; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

double dot_avx2(const double* a, const double* b, std::int64_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                               acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                               _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                               acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_avx2(const double* a, std::int64_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i];
    return acc;
}

double sumsq_avx2(const double* a, std::int64_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d v0 = _mm256_loadu_pd(a + i);
        const __m256d v1 = _mm256_loadu_pd(a + i + 4);
        acc0 = _mm256_fmadd_pd(v0, v0, acc0);
        acc1 = _mm256_fmadd_pd(v1, v1, acc1);
    }
    for (; i + 4 <= n; i += 4) {
        const __m256d v0 = _mm256_loadu_pd(a + i);
        acc0 = _mm256_fmadd_pd(v0, v0, acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

double abs_err_sum_avx2(const double* y, const double* yhat, std::int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d =
            _mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(yhat + i));
        acc = _mm256_add_pd(acc, abs_pd(d));
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += std::fabs(y[i] - yhat[i]);
    return s;
}

double sq_err_sum_avx2(const double* y, const double* yhat, std::int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d =
            _mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(yhat + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = y[i] - yhat[i];
        s += d * d;
    }
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(
            y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                   _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void adamw_update_avx2(double* p, double* m, double* v, const double* g,
                       std::int64_t n, double lr, double lr_t, double beta1,
                       double beta2, double bc2, double eps,
                       double weight_decay) {
    const __m256d b1 = _mm256_set1_pd(beta1);
    const __m256d b1c = _mm256_set1_pd(1.0 - beta1);
    const __m256d b2 = _mm256_set1_pd(beta2);
    const __m256d b2c = _mm256_set1_pd(1.0 - beta2);
    const __m256d inv_bc2 = _mm256_set1_pd(1.0 / bc2);
    const __m256d epsv = _mm256_set1_pd(eps);
    const __m256d lrt = _mm256_set1_pd(lr_t);
    const __m256d decay = _mm256_set1_pd(lr * weight_decay);
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_loadu_pd(m + i);
        __m256d vv = _mm256_loadu_pd(v + i);
        mv = _mm256_fmadd_pd(b1, mv, _mm256_mul_pd(b1c, gv));
        vv = _mm256_fmadd_pd(b2, vv, _mm256_mul_pd(b2c, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d denom =
            _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, inv_bc2)), epsv);
        __m256d pv = _mm256_loadu_pd(p + i);
        const __m256d step = _mm256_fmadd_pd(
            decay, pv, _mm256_div_pd(_mm256_mul_pd(lrt, mv), denom));
        pv = _mm256_sub_pd(pv, step);
        _mm256_storeu_pd(p + i, pv);
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double denom = std::sqrt(v[i] / bc2) + eps;
        p[i] -= lr_t * m[i] / denom + lr * weight_decay * p[i];
    }
}

} // namespace

const Kernels& avx2_kernels() {
    static const Kernels k = {
        matmul_nn_avx2, matmul_nt_avx2,    matmul_tn_avx2,
        dot_avx2,       sum_avx2,          sumsq_avx2,
        abs_err_sum_avx2, sq_err_sum_avx2, axpy_avx2,
        adamw_update_avx2,
    };
    return k;
}

} // namespace pemsbench::kernels

#endif // x86-64
