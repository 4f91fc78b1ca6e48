#include <atomic>
#include <cstdlib>
#include <string>

#include "dynbid/errors.hpp"
#include "dynbid/kernels.hpp"

namespace dynbid::kernels {

namespace scalar {
extern const Table kTable;
}
#if defined(DYNBID_HAVE_AVX2)
namespace avx2 {
extern const Table kTable;
}
#endif
#if defined(DYNBID_HAVE_NEON)
namespace neon {
extern const Table kTable;
}
#endif

namespace {

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(DYNBID_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(DYNBID_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Isa initial_isa() {
    if (const char* env = std::getenv("DYNBID_ISA")) {
        const std::string s(env);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
            if (s == name(isa) && cpu_supports(isa)) return isa;
        }
    }
    return detected();
}

std::atomic<Isa>& active_slot() {
    static std::atomic<Isa> slot{initial_isa()};
    return slot;
}

}  // namespace

std::string_view name(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
        case Isa::neon:
            return "neon";
    }
    return "unknown";
}

bool available(Isa isa) { return cpu_supports(isa); }

Isa detected() {
    if (cpu_supports(Isa::avx2)) return Isa::avx2;
    if (cpu_supports(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

Isa active() { return active_slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
    if (!available(isa)) {
        throw ParameterError("kernels: variant '" + std::string(name(isa)) + "' is not available here");
    }
    active_slot().store(isa, std::memory_order_relaxed);
}

const Table& table(Isa isa) {
    if (!available(isa)) {
        throw ParameterError("kernels: variant '" + std::string(name(isa)) + "' is not available here");
    }
    switch (isa) {
#if defined(DYNBID_HAVE_AVX2)
        case Isa::avx2:
            return avx2::kTable;
#endif
#if defined(DYNBID_HAVE_NEON)
        case Isa::neon:
            return neon::kTable;
#endif
        default:
            return scalar::kTable;
    }
}

double max_affine(std::span<const double> slope, std::span<const double> offset, double x) {
    if (slope.size() != offset.size()) throw ParameterError("max_affine: size mismatch");
    return table(active()).max_affine(slope.data(), offset.data(), slope.size(), x);
}

LossMoments loss_moments(std::span<const double> r, double a, double c) {
    return table(active()).loss_moments(r.data(), r.size(), a, c);
}

}  // namespace dynbid::kernels
