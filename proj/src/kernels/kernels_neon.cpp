// AArch64 only. Advanced SIMD is mandatory there, so no runtime probe is needed.

#include <arm_neon.h>

#include <cmath>
#include <limits>

#include "dynbid/kernels.hpp"

namespace dynbid::kernels::neon {

namespace {

double max_affine(const double* slope, const double* offset, std::size_t n, double x) {
    const float64x2_t vx = vdupq_n_f64(x);
    float64x2_t best0 = vdupq_n_f64(-std::numeric_limits<double>::infinity());
    float64x2_t best1 = best0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const float64x2_t a0 = vsubq_f64(vmulq_f64(vld1q_f64(slope + j), vx), vld1q_f64(offset + j));
        const float64x2_t a1 =
            vsubq_f64(vmulq_f64(vld1q_f64(slope + j + 2), vx), vld1q_f64(offset + j + 2));
        best0 = vmaxq_f64(best0, a0);
        best1 = vmaxq_f64(best1, a1);
    }
    double best = vmaxvq_f64(vmaxq_f64(best0, best1));
    for (; j < n; ++j) {
        const double v = slope[j] * x - offset[j];
        best = v > best ? v : best;
    }
    return best;
}

constexpr std::size_t kFlush = 16;

LossMoments loss_moments(const double* r, std::size_t n, double a, double c) {
    const float64x2_t va = vdupq_n_f64(a);
    const float64x2_t vc = vdupq_n_f64(c);
    const float64x2_t one = vdupq_n_f64(1.0);
    float64x2_t prod = one;
    float64x2_t sw = vdupq_n_f64(0.0);
    float64x2_t swr = sw;
    float64x2_t sw2 = sw;
    float64x2_t sw2r = sw;
    float64x2_t sw2r2 = sw;
    double log_sum = 0.0;
    std::size_t pending = 0;
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t vr = vld1q_f64(r + i);
        const float64x2_t x = vfmsq_f64(va, vc, vr);
        const float64x2_t w = vdivq_f64(one, x);
        const float64x2_t w2 = vmulq_f64(w, w);
        const float64x2_t w2r = vmulq_f64(w2, vr);
        prod = vmulq_f64(prod, x);
        sw = vaddq_f64(sw, w);
        swr = vfmaq_f64(swr, w, vr);
        sw2 = vaddq_f64(sw2, w2);
        sw2r = vaddq_f64(sw2r, w2r);
        sw2r2 = vfmaq_f64(sw2r2, w2r, vr);
        if (++pending == kFlush) {
            log_sum += std::log(vgetq_lane_f64(prod, 0)) + std::log(vgetq_lane_f64(prod, 1));
            prod = one;
            pending = 0;
        }
    }
    if (pending > 0) {
        log_sum += std::log(vgetq_lane_f64(prod, 0)) + std::log(vgetq_lane_f64(prod, 1));
    }
    LossMoments m;
    m.log_sum = log_sum;
    m.w = vaddvq_f64(sw);
    m.wr = vaddvq_f64(swr);
    m.w2 = vaddvq_f64(sw2);
    m.w2r = vaddvq_f64(sw2r);
    m.w2r2 = vaddvq_f64(sw2r2);
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

}  // namespace dynbid::kernels::neon
