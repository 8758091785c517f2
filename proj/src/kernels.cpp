#include "pani/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace pani::kern {

namespace scalar {

double dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby(double a, const double* x, double b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void relu(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* pre, const double* dy, double* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
}

double sq_dist(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

void adam_step(double* p, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace scalar

#if defined(__x86_64__)
namespace avx2 {
double dot(const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void axpby(double, const double*, double, double*, std::size_t);
void relu(double*, std::size_t);
void relu_bwd(const double*, const double*, double*, std::size_t);
double sq_dist(const double*, const double*, std::size_t);
void adam_step(double*, const double*, double*, double*, std::size_t, double,
               double, double, double, double, double);
} // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void axpby(double, const double*, double, double*, std::size_t);
void relu(double*, std::size_t);
void relu_bwd(const double*, const double*, double*, std::size_t);
double sq_dist(const double*, const double*, std::size_t);
void adam_step(double*, const double*, double*, double*, std::size_t, double,
               double, double, double, double, double);
} // namespace neon
#endif

namespace {

constexpr Kernels kScalar = {
    scalar::dot,    scalar::axpy,    scalar::axpby,    scalar::relu,
    scalar::relu_bwd, scalar::sq_dist, scalar::adam_step,
};

#if defined(__x86_64__)
constexpr Kernels kAvx2 = {
    avx2::dot,    avx2::axpy,    avx2::axpby,    avx2::relu,
    avx2::relu_bwd, avx2::sq_dist, avx2::adam_step,
};
#endif

#if defined(__aarch64__)
constexpr Kernels kNeon = {
    neon::dot,    neon::axpy,    neon::axpby,    neon::relu,
    neon::relu_bwd, neon::sq_dist, neon::adam_step,
};
#endif

Impl detect_best() {
#if defined(__x86_64__)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return Impl::Avx2;
#elif defined(__aarch64__)
    return Impl::Neon;
#endif
    return Impl::Scalar;
}

Impl initial_impl() {
    if (const char* env = std::getenv("PANI_KERNEL_IMPL")) {
        if (std::strcmp(env, "scalar") == 0) return Impl::Scalar;
        if (std::strcmp(env, "avx2") == 0 && impl_available(Impl::Avx2))
            return Impl::Avx2;
        if (std::strcmp(env, "neon") == 0 && impl_available(Impl::Neon))
            return Impl::Neon;
    }
    return detect_best();
}

Impl g_impl = initial_impl();

} // namespace

bool impl_available(Impl impl) {
    switch (impl) {
    case Impl::Scalar: return true;
    case Impl::Avx2:
#if defined(__x86_64__)
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    case Impl::Neon:
#if defined(__aarch64__)
        return true;
#else
        return false;
#endif
    }
    return false;
}

const Kernels& table(Impl impl) {
    switch (impl) {
#if defined(__x86_64__)
    case Impl::Avx2:
        if (impl_available(Impl::Avx2)) return kAvx2;
        break;
#endif
#if defined(__aarch64__)
    case Impl::Neon: return kNeon;
#endif
    default: break;
    }
    return kScalar;
}

Impl active_impl() { return g_impl; }

const Kernels& active() { return table(g_impl); }

bool set_active_impl(Impl impl) {
    if (!impl_available(impl)) return false;
    g_impl = impl;
    return true;
}

std::string impl_name(Impl impl) {
    switch (impl) {
    case Impl::Scalar: return "scalar";
    case Impl::Avx2: return "avx2";
    case Impl::Neon: return "neon";
    }
    return "unknown";
}

} // namespace pani::kern
