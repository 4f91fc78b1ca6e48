#pragma once

// Data-parallel inner loops with scalar reference implementations and SIMD
// variants (AVX2 on x86-64, NEON on AArch64). The variant is picked once at
// startup from CPU capabilities; DYNBID_ISA=scalar|avx2|neon overrides it.

#include <cstddef>
#include <span>
#include <string_view>

namespace dynbid::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view name(Isa isa);

/// True when the variant was compiled in and the running CPU supports it.
bool available(Isa isa);

/// Best available variant on this machine.
Isa detected();

Isa active();

/// Switches the process-wide variant. Throws ParameterError if unavailable.
/// Not thread-safe with respect to concurrent kernel calls.
void set_active(Isa isa);

/// max over j of slope[j] * x - offset[j]. Bit-identical across variants.
double max_affine(std::span<const double> slope, std::span<const double> offset, double x);

/// Sums over r of the loss-term moments of x = a - c r, with w = 1/x:
/// log x, w, w r, w^2, w^2 r, w^2 r^2. Requires a - c r > 0 for every r.
struct LossMoments {
    double log_sum = 0.0;
    double w = 0.0;
    double wr = 0.0;
    double w2 = 0.0;
    double w2r = 0.0;
    double w2r2 = 0.0;
};

LossMoments loss_moments(std::span<const double> r, double a, double c);

/// Per-variant entry points, for equivalence testing.
struct Table {
    double (*max_affine)(const double* slope, const double* offset, std::size_t n, double x);
    LossMoments (*loss_moments)(const double* r, std::size_t n, double a, double c);
};

const Table& table(Isa isa);

}  // namespace dynbid::kernels
