#include "pemsbench/kernels.hpp"

#include "pemsbench/errors.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace pemsbench::kernels {
namespace {

#if defined(__x86_64__) || defined(_M_X64)
bool detect_avx2() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#else
bool detect_avx2() { return false; }
#endif

Backend initial_backend() {
    if (const char* env = std::getenv("PEMSBENCH_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && detect_avx2()) return Backend::avx2;
        return Backend::scalar;
    }
    return detect_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& backend_slot() {
    static std::atomic<Backend> slot{initial_backend()};
    return slot;
}

} // namespace

bool avx2_available() { return detect_avx2(); }

Backend active_backend() { return backend_slot().load(); }

const char* backend_name() {
    return active_backend() == Backend::avx2 ? "avx2" : "scalar";
}

void force_backend(Backend b) {
    if (b == Backend::avx2 && !detect_avx2()) {
        throw ConfigError("kernels: avx2 backend requested but not supported "
                          "by this CPU");
    }
    backend_slot().store(b);
}

const Kernels& active() {
#if defined(__x86_64__) || defined(_M_X64)
    if (active_backend() == Backend::avx2) return avx2_kernels();
#endif
    return scalar_kernels();
}

} // namespace pemsbench::kernels
