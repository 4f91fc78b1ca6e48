#include <cmath>
#include <limits>

#include "dynbid/kernels.hpp"

namespace dynbid::kernels::scalar {

namespace {

double max_affine(const double* slope, const double* offset, std::size_t n, double x) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        const double v = slope[j] * x - offset[j];
        best = v > best ? v : best;
    }
    return best;
}

LossMoments loss_moments(const double* r, std::size_t n, double a, double c) {
    LossMoments m;
    for (std::size_t i = 0; i < n; ++i) {
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

}  // namespace dynbid::kernels::scalar
