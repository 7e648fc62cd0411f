#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pemsbench/kernels.hpp"
#include "pemsbench/rng.hpp"

#include <cmath>
#include <vector>

using namespace pemsbench;

namespace {

std::vector<double> random_vec(rng::Stream& s, std::int64_t n, double lo = -2.0,
                               double hi = 2.0) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = s.next_uniform(lo, hi);
    return v;
}

bool close(double a, double b, double tol) {
    return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a),
                                               std::fabs(b)});
}

} // namespace

TEST_CASE("scalar matmul matches hand-computed products") {
    const auto& k = kernels::scalar_kernels();
    // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
    const std::vector<double> a = {1, 2, 3, 4};
    const std::vector<double> b = {5, 6, 7, 8};
    std::vector<double> c(4, -1.0);
    k.matmul_nn(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<double>{19, 22, 43, 50});

    // nt: A * B^T with B = [[5,6],[7,8]] -> A * [[5,7],[6,8]]
    k.matmul_nt(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<double>{17, 23, 39, 53});

    // tn: A^T * B with A stored [k=2, m=2]
    k.matmul_tn(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<double>{26, 30, 38, 44});
}

TEST_CASE("scalar reductions match simple definitions") {
    const auto& k = kernels::scalar_kernels();
    const std::vector<double> a = {1.0, -2.0, 3.5};
    const std::vector<double> b = {0.5, 1.0, -1.0};
    CHECK(k.dot(a.data(), b.data(), 3) == doctest::Approx(-5.0));
    CHECK(k.sum(a.data(), 3) == doctest::Approx(2.5));
    CHECK(k.sumsq(a.data(), 3) == doctest::Approx(17.25));
    CHECK(k.abs_err_sum(a.data(), b.data(), 3) == doctest::Approx(8.0));
    CHECK(k.sq_err_sum(a.data(), b.data(), 3) ==
          doctest::Approx(0.25 + 9.0 + 20.25));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
    if (!kernels::avx2_available()) {
        MESSAGE("avx2 unavailable; equivalence test skipped");
        return;
    }
    const auto& ks = kernels::scalar_kernels();
    const auto& kv = kernels::avx2_kernels();
    rng::Stream s(7, "kernel-equivalence");

    // Matrix products over o shape sweep that covers remainders of the
    // 16/8/4-wide inner loops.
    for (int m : {1, 2, 3, 5, 8}) {
        for (int k : {1, 3, 4, 17, 64}) {
            for (int n : {1, 2, 4, 15, 16, 33}) {
                const auto a = random_vec(s, static_cast<std::int64_t>(m) * k);
                const auto b_nn =
                    random_vec(s, static_cast<std::int64_t>(k) * n);
                std::vector<double> c0(static_cast<size_t>(m) * n);
                std::vector<double> c1(static_cast<size_t>(m) * n);
                ks.matmul_nn(a.data(), b_nn.data(), c0.data(), m, k, n);
                kv.matmul_nn(a.data(), b_nn.data(), c1.data(), m, k, n);
                for (size_t i = 0; i < c0.size(); ++i) {
                    CHECK(close(c0[i], c1[i], 1e-12));
                }
                const auto b_nt =
                    random_vec(s, static_cast<std::int64_t>(n) * k);
                ks.matmul_nt(a.data(), b_nt.data(), c0.data(), m, k, n);
                kv.matmul_nt(a.data(), b_nt.data(), c1.data(), m, k, n);
                for (size_t i = 0; i < c0.size(); ++i) {
                    CHECK(close(c0[i], c1[i], 1e-12));
                }
                const auto a_tn =
                    random_vec(s, static_cast<std::int64_t>(k) * m);
                ks.matmul_tn(a_tn.data(), b_nn.data(), c0.data(), m, k, n);
                kv.matmul_tn(a_tn.data(), b_nn.data(), c1.data(), m, k, n);
                for (size_t i = 0; i < c0.size(); ++i) {
                    CHECK(close(c0[i], c1[i], 1e-12));
                }
            }
        }
    }

    for (std::int64_t n : {1, 3, 4, 7, 8, 31, 100, 1001}) {
        const auto a = random_vec(s, n);
        const auto b = random_vec(s, n);
        CHECK(close(ks.dot(a.data(), b.data(), n), kv.dot(a.data(), b.data(), n),
                    1e-12));
        CHECK(close(ks.sum(a.data(), n), kv.sum(a.data(), n), 1e-11));
        CHECK(close(ks.sumsq(a.data(), n), kv.sumsq(a.data(), n), 1e-12));
        CHECK(close(ks.abs_err_sum(a.data(), b.data(), n),
                    kv.abs_err_sum(a.data(), b.data(), n), 1e-12));
        CHECK(close(ks.sq_err_sum(a.data(), b.data(), n),
                    kv.sq_err_sum(a.data(), b.data(), n), 1e-12));

        auto y0 = random_vec(s, n);
        auto y1 = y0;
        ks.axpy(0.37, a.data(), y0.data(), n);
        kv.axpy(0.37, a.data(), y1.data(), n);
        for (size_t i = 0; i < y0.size(); ++i) CHECK(close(y0[i], y1[i], 1e-13));
    }
}

TEST_CASE("adamw step matches the scalar definition elementwise") {
    const std::int64_t n = 13;
    rng::Stream s(11, "adamw");
    const auto g = random_vec(s, n);
    std::vector<double> p0 = random_vec(s, n), m0(n, 0.0), v0(n, 0.0);
    auto p1 = p0, m1 = m0, v1 = v0;

    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
    const double bc1 = 1.0 - b1, bc2 = 1.0 - b2; // t = 1
    const double lr_t = lr / bc1;

    kernels::scalar_kernels().adamw_update(p0.data(), m0.data(), v0.data(),
                                           g.data(), n, lr, lr_t, b1, b2, bc2,
                                           eps, wd);
    // Hand recompute.
    for (std::int64_t i = 0; i < n; ++i) {
        const size_t u = static_cast<size_t>(i);
        const double m = (1.0 - b1) * g[u];
        const double v = (1.0 - b2) * g[u] * g[u];
        const double expect =
            p1[u] - lr_t * m / (std::sqrt(v / bc2) + eps) - lr * wd * p1[u];
        CHECK(p0[u] == doctest::Approx(expect).epsilon(1e-14));
    }

    if (kernels::avx2_available()) {
        kernels::avx2_kernels().adamw_update(p1.data(), m1.data(), v1.data(),
                                             g.data(), n, lr, lr_t, b1, b2,
                                             bc2, eps, wd);
        for (std::int64_t i = 0; i < n; ++i) {
            const size_t u = static_cast<size_t>(i);
            CHECK(close(p0[u], p1[u], 1e-13));
            CHECK(close(m0[u], m1[u], 1e-13));
            CHECK(close(v0[u], v1[u], 1e-13));
        }
    }
}

TEST_CASE("backend dispatch is sticky and reports a name") {
    const auto original = kernels::active_backend();
    CHECK((kernels::backend_name() == std::string("avx2") ||
           kernels::backend_name() == std::string("scalar")));
    kernels::force_backend(kernels::Backend::scalar);
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
    CHECK(kernels::backend_name() == std::string("scalar"));
    kernels::force_backend(original);
}
