#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "dynbid/errors.hpp"
#include "dynbid/kernels.hpp"

using namespace dynbid;
using namespace dynbid::kernels;

namespace {

std::vector<Isa> compiled() {
    std::vector<Isa> out;
    for (Isa i : {Isa::scalar, Isa::avx2, Isa::neon}) {
        if (available(i)) out.push_back(i);
    }
    return out;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// Straightforward long-double sums, independent of the kernel code paths.
LossMoments moments_oracle(const std::vector<double>& r, double a, double c) {
    long double ls = 0, w = 0, wr = 0, w2 = 0, w2r = 0, w2r2 = 0;
    for (double ri : r) {
        const long double x = static_cast<long double>(a) - static_cast<long double>(c) * ri;
        const long double iw = 1.0L / x;
        ls += std::log(x);
        w += iw;
        wr += iw * ri;
        w2 += iw * iw;
        w2r += iw * iw * ri;
        w2r2 += iw * iw * ri * ri;
    }
    return {double(ls), double(w), double(wr), double(w2), double(w2r), double(w2r2)};
}

}  // namespace

TEST_CASE("scalar is always available and the active variant is usable") {
    CHECK(available(Isa::scalar));
    CHECK(available(active()));
    CHECK(name(Isa::avx2) == "avx2");
}

TEST_CASE("max_affine matches a plain loop on every variant, bit for bit") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 31u, 64u, 401u}) {
        std::vector<double> s(n), o(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = g(rng);
            o[i] = g(rng);
        }
        for (double x : {-2.0, 0.0, 0.37, 5.0}) {
            double best = -INFINITY;
            for (std::size_t i = 0; i < n; ++i) best = std::max(best, s[i] * x - o[i]);
            for (Isa isa : compiled()) {
                CAPTURE(name(isa));
                CHECK(same_bits(table(isa).max_affine(s.data(), o.data(), n, x), best));
            }
        }
    }
}

TEST_CASE("loss_moments variants agree with each other and with a long-double oracle") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n : {0u, 1u, 3u, 4u, 6u, 17u, 1000u}) {
        std::vector<double> r(n);
        for (auto& x : r) x = 3.0 * u(rng);
        const double a = 4.0, c = 1.1;
        const LossMoments ref = moments_oracle(r, a, c);
        const LossMoments sc = table(Isa::scalar).loss_moments(r.data(), n, a, c);
        for (Isa isa : compiled()) {
            CAPTURE(name(isa));
            const LossMoments m = table(isa).loss_moments(r.data(), n, a, c);
            const double tol = 1e-12 * (1.0 + static_cast<double>(n));
            CHECK(m.log_sum == doctest::Approx(ref.log_sum).epsilon(tol));
            CHECK(m.w == doctest::Approx(ref.w).epsilon(tol));
            CHECK(m.wr == doctest::Approx(ref.wr).epsilon(tol));
            CHECK(m.w2 == doctest::Approx(ref.w2).epsilon(tol));
            CHECK(m.w2r == doctest::Approx(ref.w2r).epsilon(tol));
            CHECK(m.w2r2 == doctest::Approx(ref.w2r2).epsilon(tol));
            CHECK(m.w == doctest::Approx(sc.w).epsilon(tol));
        }
    }
}

TEST_CASE("dispatch can be switched and restored") {
    const Isa before = active();
    set_active(Isa::scalar);
    CHECK(active() == Isa::scalar);
    const std::vector<double> s{1.0, -1.0}, o{0.0, 0.0};
    CHECK(max_affine(s, o, -3.0) == 3.0);
    set_active(before);
    CHECK(active() == before);
    for (Isa isa : {Isa::avx2, Isa::neon}) {
        if (!available(isa)) CHECK_THROWS_AS(set_active(isa), ParameterError);
    }
}
