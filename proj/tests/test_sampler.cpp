#include <cmath>

#include "doctest.h"
#include "xrgen/sampler.hpp"

using namespace xrgen;

namespace {

struct ZeroScore final : sample::ScoreFn {
    ImageTensor operator()(const ImageTensor& x, const ImageTensor*, double) const override {
        return ImageTensor(x.height, x.width, x.channels);
    }
};

net::ScoreModel tiny_model(bool conditional, bool noise_conditioned, std::uint64_t seed = 7) {
    net::ScoreModelConfig c;
    c.resolution_levels = {8, 4};
    c.channels_per_level = {8, 8};
    c.fourier_dim = 4;
    c.conditional = conditional;
    c.noise_conditioned = noise_conditioned;
    c.input_channels = conditional ? 2 : 1;
    return net::ScoreModel(c, seed);
}

double variance(const ImageTensor& x) {
    double s = 0.0, s2 = 0.0;
    for (double v : x.values) {
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(x.size());
    return s2 / n - (s / n) * (s / n);
}

}  // namespace

TEST_CASE("predictor step analytic properties") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    ZeroScore zero;
    Rng rng(3);
    ImageTensor x(10, 10, 1);
    fill_standard_normal(x, rng);

    SUBCASE("degenerate step t_hi == t_lo is the identity") {
        Rng r(5);
        const ImageTensor out = sample::predictor_step(zero, x, nullptr, 0.5, 0.5, sched, r);
        CHECK(out.values == x.values);
    }
    SUBCASE("zero score leaves only sqrt(dv)-scaled noise") {
        Rng r(7);
        const double t_hi = 0.6, t_lo = 0.55;
        const double dv = sched.sigma(t_hi) * sched.sigma(t_hi) -
                          sched.sigma(t_lo) * sched.sigma(t_lo);
        ImageTensor big(100, 100, 1);
        const ImageTensor out = sample::predictor_step(zero, big, nullptr, t_hi, t_lo, sched, r);
        CHECK(variance(out) == doctest::Approx(dv).epsilon(0.05));
    }
    SUBCASE("ordering violations throw") {
        Rng r(9);
        CHECK_THROWS_AS(sample::predictor_step(zero, x, nullptr, 0.3, 0.5, sched, r),
                        std::invalid_argument);
        CHECK_THROWS_AS(sample::predictor_step(zero, x, nullptr, 1.2, 0.5, sched, r),
                        std::invalid_argument);
    }
}

TEST_CASE("corrector step properties") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    const sample::GaussianAnalyticScore score(1.0, sched);
    Rng rng(11);
    ImageTensor x(20, 20, 1);
    fill_standard_normal(x, rng);

    SUBCASE("epsilon scales as snr^2 for identical draws") {
        Rng r1(13), r2(13);
        double e1 = 0.0, e2 = 0.0;
        sample::corrector_step(score, x, nullptr, 0.5, 0.2, r1, &e1);
        sample::corrector_step(score, x, nullptr, 0.5, 0.4, r2, &e2);
        CHECK(e2 == doctest::Approx(4.0 * e1).epsilon(1e-12));
    }
    SUBCASE("snr -> 0 leaves the state unchanged in the limit") {
        Rng r(15);
        const ImageTensor out = sample::corrector_step(score, x, nullptr, 0.5, 1e-9, r);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(std::fabs(out.values[i] - x.values[i]) < 1e-6);
    }
    SUBCASE("vanishing score norm skips the update") {
        ZeroScore zero;
        Rng r(17);
        double eps = -1.0;
        const ImageTensor out = sample::corrector_step(zero, x, nullptr, 0.5, 0.4, r, &eps);
        CHECK(out.values == x.values);
        CHECK(eps == 0.0);
    }
    SUBCASE("t outside (0,1] is rejected") {
        Rng r(19);
        CHECK_THROWS_AS(sample::corrector_step(score, x, nullptr, 0.0, 0.4, r), std::domain_error);
    }
}

TEST_CASE("Langevin corrector stationarity at fixed t") {
    // 1e4 parallel scalar chains in one tensor, 1e4 iterations from the target
    const sde::SigmaSchedule sched(0.01, 128.0);
    const double t = 0.5;
    const double v = 1.0 + sched.sigma(t) * sched.sigma(t);
    const sample::GaussianAnalyticScore score(1.0, sched);

    Rng rng(21);
    ImageTensor x(100, 100, 1);
    for (double& e : x.values) e = std::sqrt(v) * rng.normal();
    for (int it = 0; it < 10000; ++it)
        x = sample::corrector_step(score, x, nullptr, t, 0.1, rng);
    CHECK(variance(x) == doctest::Approx(v).epsilon(0.05));
}

TEST_CASE("predictor-only Gaussian chain reproduces the data variance (N=500)") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    const sample::GaussianAnalyticScore score(1.0, sched);
    sample::SamplerConfig cfg;
    cfg.n_steps = 500;
    cfg.corrector_steps = 0;
    cfg.clamp_output = false;
    cfg.seed = 23;
    Rng rng(cfg.seed);
    ImageTensor x = sde::prior_sample(100, 100, 1, sched, rng);
    const ImageTensor out = sample::run_reverse_chain(score, std::move(x), nullptr, 1.0, cfg,
                                                      sched, rng);
    CHECK(variance(out) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("predictor-corrector Gaussian chain at a moderate SNR stays within 5%") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    const sample::GaussianAnalyticScore score(1.0, sched);
    sample::SamplerConfig cfg;
    cfg.n_steps = 500;
    cfg.corrector_steps = 1;
    cfg.snr = 0.1;
    cfg.clamp_output = false;
    cfg.seed = 25;
    Rng rng(cfg.seed);
    ImageTensor x = sde::prior_sample(100, 100, 1, sched, rng);
    const ImageTensor out = sample::run_reverse_chain(score, std::move(x), nullptr, 1.0, cfg,
                                                      sched, rng);
    CHECK(variance(out) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("time grids decrease strictly and sigma steps telescope") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    const int N = 500;
    double sum = 0.0;
    double prev_t = 2.0;
    for (int n = N - 1; n >= 0; --n) {
        const double t_hi = static_cast<double>(n + 1) / N;
        const double t_lo = static_cast<double>(n) / N;
        CHECK(t_lo < prev_t);
        prev_t = t_lo;
        sum += sched.sigma(t_hi) * sched.sigma(t_hi) - sched.sigma(t_lo) * sched.sigma(t_lo);
    }
    const double expect = 128.0 * 128.0 - 0.01 * 0.01;
    CHECK(sum == doctest::Approx(expect).epsilon(1e-6));

    // CSM grid endpoints
    const double t0 = 0.4;
    CHECK(static_cast<double>(N - 1) / N * t0 == doctest::Approx(t0 * (N - 1) / N));
    CHECK(0.0 / N * t0 == 0.0);
}

TEST_CASE("csm and ctm samplers: misuse, shape, stochasticity, determinism") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    net::ScoreModel uncond = tiny_model(false, true);
    net::ScoreModel cond = tiny_model(true, true);
    net::ScoreModel unet = tiny_model(false, false);
    ImageTensor y(8, 8, 1);
    for (int i = 2; i < 6; ++i)
        for (int j = 2; j < 6; ++j) y.at(0, i, j) = 0.5;

    sample::SamplerConfig cfg;
    cfg.n_steps = 10;
    cfg.seed = 31;

    SUBCASE("model/method mismatches throw") {
        CHECK_THROWS_AS(sample::sample_csm(cond, y, cfg, sched), std::invalid_argument);
        CHECK_THROWS_AS(sample::sample_csm(unet, y, cfg, sched), std::invalid_argument);
        CHECK_THROWS_AS(sample::sample_ctm(uncond, y, cfg, sched), std::invalid_argument);
        CHECK_THROWS_AS(sample::sample_ctm(unet, y, cfg, sched), std::invalid_argument);
    }
    SUBCASE("shapes match the condition and outputs are clamped") {
        const ImageTensor a = sample::sample_ctm(cond, y, cfg, sched);
        CHECK(a.height == 8);
        CHECK(a.width == 8);
        for (double v : a.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    SUBCASE("different seeds give different samples, same seed identical") {
        const ImageTensor a = sample::sample_ctm(cond, y, cfg, sched);
        sample::SamplerConfig cfg2 = cfg;
        cfg2.seed = 32;
        const ImageTensor b = sample::sample_ctm(cond, y, cfg2, sched);
        double diff = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            diff += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
        CHECK(diff > 0.0);
        const ImageTensor c = sample::sample_ctm(cond, y, cfg, sched);
        CHECK(a.values == c.values);
    }
    SUBCASE("csm with a tiny t0 stays close to the condition") {
        sample::SamplerConfig small = cfg;
        small.t0 = 1e-4;
        small.n_steps = 50;
        const ImageTensor out = sample::sample_csm(uncond, y, small, sched);
        double rms = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            rms += (out.values[i] - y.values[i]) * (out.values[i] - y.values[i]);
        rms = std::sqrt(rms / static_cast<double>(y.size()));
        CHECK(rms < sched.sigma(small.t0) + 0.05);
    }
    SUBCASE("trace records decreasing times and corrector activity") {
        std::vector<sample::StepTrace> trace;
        sample::sample_ctm(cond, y, cfg, sched, &trace);
        CHECK(trace.size() == 10);
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i].t < trace[i - 1].t);
        CHECK(trace.back().t == 0.0);
        CHECK(trace.back().corrector_epsilon == 0.0);  // skipped below t_eps
    }
    SUBCASE("the literal paper update runs behind its flag") {
        sample::SamplerConfig lit = cfg;
        lit.literal_paper_updates = true;
        const ImageTensor a = sample::sample_ctm(cond, y, lit, sched);
        CHECK(a.size() == y.size());
    }
    SUBCASE("unet sampling is a deterministic single pass") {
        const ImageTensor a = sample::sample_unet(unet, y);
        const ImageTensor b = sample::sample_unet(unet, y);
        CHECK(a.values == b.values);
        for (double v : a.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("csm initial state law: std(x_N - y) = sigma_{t0}") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    Rng rng(41);
    ImageTensor y(100, 100, 1);
    for (double& v : y.values) v = 0.5;
    const ImageTensor x = sample::csm_initial_state(y, 0.4, sched, rng);  // 1e4 draws
    ImageTensor diff = x;
    for (std::size_t i = 0; i < diff.size(); ++i) diff.values[i] -= y.values[i];
    CHECK(std::sqrt(variance(diff)) == doctest::Approx(sched.sigma(0.4)).epsilon(0.02));
}
