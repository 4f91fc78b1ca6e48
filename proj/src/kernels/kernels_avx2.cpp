// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>
#include <limits>

#include "dynbid/kernels.hpp"

namespace dynbid::kernels::avx2 {

namespace {

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    hi = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, hi));
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    hi = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, hi));
}

// mul then sub, never fused, so results match the scalar kernel bit for bit
double max_affine(const double* slope, const double* offset, std::size_t n, double x) {
    const __m256d vx = _mm256_set1_pd(x);
    __m256d best0 = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
    __m256d best1 = best0;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        const __m256d a0 = _mm256_sub_pd(_mm256_mul_pd(_mm256_loadu_pd(slope + j), vx),
                                         _mm256_loadu_pd(offset + j));
        const __m256d a1 = _mm256_sub_pd(_mm256_mul_pd(_mm256_loadu_pd(slope + j + 4), vx),
                                         _mm256_loadu_pd(offset + j + 4));
        best0 = _mm256_max_pd(best0, a0);
        best1 = _mm256_max_pd(best1, a1);
    }
    for (; j + 4 <= n; j += 4) {
        const __m256d a0 = _mm256_sub_pd(_mm256_mul_pd(_mm256_loadu_pd(slope + j), vx),
                                         _mm256_loadu_pd(offset + j));
        best0 = _mm256_max_pd(best0, a0);
    }
    double best = hmax(_mm256_max_pd(best0, best1));
    for (; j < n; ++j) {
        const double v = slope[j] * x - offset[j];
        best = v > best ? v : best;
    }
    return best;
}

// log is accumulated as log of lane products, flushed every kFlush vectors so a
// lane multiplies at most kFlush factors (each >= ~1e-15 in practice).
constexpr std::size_t kFlush = 16;

LossMoments loss_moments(const double* r, std::size_t n, double a, double c) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vc = _mm256_set1_pd(c);
    const __m256d one = _mm256_set1_pd(1.0);
    __m256d prod = one;
    __m256d sw = _mm256_setzero_pd();
    __m256d swr = sw;
    __m256d sw2 = sw;
    __m256d sw2r = sw;
    __m256d sw2r2 = sw;
    double log_sum = 0.0;
    std::size_t pending = 0;
    std::size_t i = 0;
    alignas(32) double lanes[4];
    for (; i + 4 <= n; i += 4) {
        const __m256d vr = _mm256_loadu_pd(r + i);
        const __m256d x = _mm256_fnmadd_pd(vc, vr, va);
        const __m256d w = _mm256_div_pd(one, x);
        const __m256d w2 = _mm256_mul_pd(w, w);
        const __m256d w2r = _mm256_mul_pd(w2, vr);
        prod = _mm256_mul_pd(prod, x);
        sw = _mm256_add_pd(sw, w);
        swr = _mm256_fmadd_pd(w, vr, swr);
        sw2 = _mm256_add_pd(sw2, w2);
        sw2r = _mm256_add_pd(sw2r, w2r);
        sw2r2 = _mm256_fmadd_pd(w2r, vr, sw2r2);
        if (++pending == kFlush) {
            _mm256_store_pd(lanes, prod);
            log_sum += std::log(lanes[0]) + std::log(lanes[1]) + std::log(lanes[2]) + std::log(lanes[3]);
            prod = one;
            pending = 0;
        }
    }
    if (pending > 0) {
        _mm256_store_pd(lanes, prod);
        log_sum += std::log(lanes[0]) + std::log(lanes[1]) + std::log(lanes[2]) + std::log(lanes[3]);
    }
    LossMoments m;
    m.log_sum = log_sum;
    m.w = hsum(sw);
    m.wr = hsum(swr);
    m.w2 = hsum(sw2);
    m.w2r = hsum(sw2r);
    m.w2r2 = hsum(sw2r2);
    for (; i < n; ++i) {
        const double x = a - c * r[i];
        const double w = 1.0 / x;
        const double w2 = w * w;
        m.log_sum += std::log(x);
        m.w += w;
        m.wr += w * r[i];
        m.w2 += w2;
        m.w2r += w2 * r[i];
        m.w2r2 += w2 * r[i] * r[i];
    }
    return m;
}

}  // namespace

extern const Table kTable{&max_affine, &loss_moments};

}  // namespace dynbid::kernels::avx2
