#include "vcmi/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "vcmi/errors.hpp"

namespace vcmi::kernels {

const Table& scalar_table();
const Table& avx2_table();

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Table& table_for(Backend b) {
    if (b == Backend::scalar) return scalar_table();
    if (!cpu_supports_avx2()) throw ConfigError("kernels: avx2 backend requested but CPU lacks AVX2+FMA");
    return avx2_table();
}

std::string backend_name(Backend b) {
    return b == Backend::scalar ? "scalar" : "avx2";
}

namespace {

std::atomic<Backend> g_backend{Backend::scalar};
std::atomic<const Table*> g_table{nullptr};

Backend resolve_initial() {
    if (const char* env = std::getenv("VCMI_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_supports_avx2())
                throw ConfigError("VCMI_KERNELS=avx2 but CPU lacks AVX2+FMA");
            return Backend::avx2;
        }
        throw ConfigError(std::string("VCMI_KERNELS: unknown backend '") + env +
                          "' (expected scalar or avx2)");
    }
    return cpu_supports_avx2() ? Backend::avx2 : Backend::scalar;
}

void ensure_init() {
    if (g_table.load(std::memory_order_acquire) == nullptr) {
        Backend b = resolve_initial();
        g_backend.store(b, std::memory_order_relaxed);
        g_table.store(&table_for(b), std::memory_order_release);
    }
}

}  // namespace

const Table& active() {
    ensure_init();
    return *g_table.load(std::memory_order_acquire);
}

Backend active_backend() {
    ensure_init();
    return g_backend.load(std::memory_order_relaxed);
}

void set_backend(Backend b) {
    const Table& t = table_for(b);
    g_backend.store(b, std::memory_order_relaxed);
    g_table.store(&t, std::memory_order_release);
}

}  // namespace vcmi::kernels
