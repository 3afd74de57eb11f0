#include <cmath>

#include "doctest.h"
#include "xrgen/sde.hpp"

using namespace xrgen;
using sde::SigmaSchedule;

namespace {
// independently computed with 40-digit arithmetic
constexpr double kSigmaHalf = 1.131370849898476039;     // sigma(0.5)
constexpr double kG0 = 0.04349068969310031196;          // 0.01*sqrt(2 ln 12800)
constexpr double kG1 = 556.6808280716839931;            // 128*sqrt(2 ln 12800)

double rel_err(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }
}  // namespace

TEST_CASE("sigma schedule endpoints are exact") {
    SigmaSchedule s(0.01, 128.0);
    CHECK(s.sigma(0.0) == 0.01);
    CHECK(s.sigma(1.0) == 128.0);
}

TEST_CASE("sigma schedule interior values match the arbitrary-precision oracle") {
    SigmaSchedule s(0.01, 128.0);
    CHECK(rel_err(s.sigma(0.5), kSigmaHalf) < 1e-13);
}

TEST_CASE("drift is zero and diffusion matches the oracle") {
    SigmaSchedule s(0.01, 128.0);
    for (double t : {0.0, 0.17, 0.5, 0.93, 1.0}) CHECK(s.drift(t) == 0.0);
    CHECK(rel_err(s.diffusion(0.0), kG0) < 1e-13);
    CHECK(rel_err(s.diffusion(1.0), kG1) < 1e-13);
}

TEST_CASE("sigma rejects t outside [0,1] and bad bounds") {
    SigmaSchedule s(0.01, 128.0);
    CHECK_THROWS_AS(s.sigma(-0.001), std::domain_error);
    CHECK_THROWS_AS(s.sigma(1.001), std::domain_error);
    CHECK_THROWS_AS(SigmaSchedule(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(SigmaSchedule(2.0, 1.0), std::invalid_argument);
}

TEST_CASE("log-linearity and monotonicity") {
    SigmaSchedule s(0.01, 128.0);
    const double l0 = std::log(s.sigma(0.0)), l1 = std::log(s.sigma(1.0));
    for (int i = 0; i < 10; ++i) {
        const double t = i / 9.0;
        const double expected = l0 + t * (l1 - l0);
        CHECK(std::fabs(std::log(s.sigma(t)) - expected) / std::fabs(expected) < 1e-12);
    }
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        double a = rng.uniform(), b = rng.uniform();
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        CHECK(s.sigma(a) < s.sigma(b));
    }
}

TEST_CASE("perturb basics") {
    SigmaSchedule s(0.01, 128.0);
    ImageTensor x0(4, 5, 1), n(4, 5, 1);
    Rng rng(7);
    fill_standard_normal(n, rng);

    SUBCASE("zero x0 at t=1 scales noise by sigma_max") {
        ImageTensor out = sde::perturb(x0, s, 1.0, n);
        for (std::size_t i = 0; i < out.size(); ++i)
            CHECK(out.values[i] == doctest::Approx(128.0 * n.values[i]).epsilon(1e-14));
    }
    SUBCASE("zero noise is the identity") {
        ImageTensor z(4, 5, 1);
        fill_standard_normal(x0, rng);
        ImageTensor out = sde::perturb(x0, s, 0.3, z);
        CHECK(out.values == x0.values);
    }
    SUBCASE("shape mismatch throws") {
        ImageTensor bad(4, 4, 1);
        CHECK_THROWS_AS(sde::perturb(x0, s, 0.5, bad), std::invalid_argument);
    }
    SUBCASE("affine in x0 and in noise") {
        ImageTensor y0(4, 5, 1), dz(4, 5, 1);
        fill_standard_normal(x0, rng);
        fill_standard_normal(y0, rng);
        fill_standard_normal(dz, rng);
        const double t = 0.37;
        const ImageTensor a = sde::perturb(x0, s, t, n);
        ImageTensor x0d = x0;
        for (std::size_t i = 0; i < x0d.size(); ++i) x0d.values[i] += y0.values[i];
        const ImageTensor b = sde::perturb(x0d, s, t, n);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(b.values[i] - a.values[i] == doctest::Approx(y0.values[i]).epsilon(1e-12));
        ImageTensor nd = n;
        for (std::size_t i = 0; i < nd.size(); ++i) nd.values[i] += dz.values[i];
        const ImageTensor c = sde::perturb(x0, s, t, nd);
        const double sig = s.sigma(t);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(c.values[i] - a.values[i] == doctest::Approx(sig * dz.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("perturb Monte-Carlo variance at t=0.5 is sigma^2 = 1.28") {
    SigmaSchedule s(0.01, 128.0);
    ImageTensor x0(10, 10, 1);
    Rng rng(11);
    double sum = 0.0, sum2 = 0.0;
    long count = 0;
    for (int rep = 0; rep < 1000; ++rep) {  // 1e5 scalar draws
        ImageTensor n(10, 10, 1);
        fill_standard_normal(n, rng);
        ImageTensor xt = sde::perturb(x0, s, 0.5, n);
        for (double v : xt.values) {
            sum += v;
            sum2 += v * v;
            ++count;
        }
    }
    const double var = sum2 / count - (sum / count) * (sum / count);
    CHECK(var == doctest::Approx(1.28).epsilon(0.02));
}

TEST_CASE("kernel score basics and the score/noise identity") {
    SigmaSchedule s(0.01, 128.0);
    Rng rng(13);

    SUBCASE("score at the mean is zero") {
        ImageTensor x0(3, 3, 1);
        fill_standard_normal(x0, rng);
        ImageTensor sc = sde::kernel_score(x0, x0, s, 0.5);
        for (double v : sc.values) CHECK(v == 0.0);
    }
    SUBCASE("one-sigma displacement gives -1/sigma") {
        const double t = 0.61;
        const double sig = s.sigma(t);
        ImageTensor x0(3, 3, 1), xt(3, 3, 1);
        for (double& v : xt.values) v = sig;
        ImageTensor sc = sde::kernel_score(xt, x0, s, t);
        for (double v : sc.values) CHECK(v == doctest::Approx(-1.0 / sig).epsilon(1e-12));
    }
    SUBCASE("t=0 and t<0 are rejected") {
        ImageTensor a(2, 2, 1);
        CHECK_THROWS_AS(sde::kernel_score(a, a, s, 0.0), std::domain_error);
        CHECK_THROWS_AS(sde::kernel_score(a, a, s, -0.2), std::domain_error);
    }
    SUBCASE("kernel_score(perturb(x0,t,z), x0, t) = -z/sigma elementwise") {
        for (int rep = 0; rep < 100; ++rep) {
            const double t = rng.uniform(1e-3, 1.0);
            ImageTensor x0(4, 4, 1), z(4, 4, 1);
            fill_standard_normal(x0, rng);
            fill_standard_normal(z, rng);
            const ImageTensor xt = sde::perturb(x0, s, t, z);
            const ImageTensor sc = sde::kernel_score(xt, x0, s, t);
            const double sig = s.sigma(t);
            for (std::size_t i = 0; i < sc.size(); ++i) {
                const double expect = -z.values[i] / sig;
                CHECK(std::fabs(sc.values[i] - expect) <=
                      1e-9 * std::max(1.0, std::fabs(expect)));
            }
        }
    }
}

TEST_CASE("prior sample statistics and determinism") {
    SigmaSchedule s(0.01, 128.0);
    SUBCASE("deterministic for a fixed seed") {
        Rng r1(99), r2(99);
        ImageTensor a = sde::prior_sample(8, 8, 1, s, r1);
        ImageTensor b = sde::prior_sample(8, 8, 1, s, r2);
        CHECK(a.values == b.values);
    }
    SUBCASE("mean and std over 1e6 entries") {
        Rng rng(17);
        ImageTensor big = sde::prior_sample(1000, 1000, 1, s, rng);
        double sum = 0.0, sum2 = 0.0;
        for (double v : big.values) {
            sum += v;
            sum2 += v * v;
        }
        const double n = static_cast<double>(big.size());
        const double mean = sum / n;
        const double stdev = std::sqrt(sum2 / n - mean * mean);
        CHECK(std::fabs(mean) < 3.0 * 128.0 / 1000.0);
        CHECK(stdev == doctest::Approx(128.0).epsilon(0.01));
    }
}
