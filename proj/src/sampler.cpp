#include "xrgen/sampler.hpp"

#include <cmath>
#include <fstream>

#include "xrgen/errors.hpp"

namespace xrgen::sample {

void SamplerConfig::validate() const {
    if (n_steps < 1) throw std::invalid_argument("SamplerConfig: n_steps must be >= 1");
    if (!(t0 > 0.0 && t0 <= 1.0)) throw std::invalid_argument("SamplerConfig: t0 in (0,1]");
    if (!(snr > 0.0)) throw std::invalid_argument("SamplerConfig: snr must be positive");
    if (corrector_steps < 0) throw std::invalid_argument("SamplerConfig: corrector_steps >= 0");
}

ImageTensor predictor_step(const ScoreFn& score, const ImageTensor& x, const ImageTensor* cond,
                           double t_hi, double t_lo, const sde::SigmaSchedule& sched, Rng& rng,
                           bool literal) {
    if (!(t_lo >= 0.0 && t_lo <= t_hi && t_hi <= 1.0))
        throw std::invalid_argument("predictor_step: requires 0 <= t_lo <= t_hi <= 1");

    if (literal) {
        const ImageTensor s = score(x, cond, t_lo);
        const double g = sched.diffusion(t_lo);
        ImageTensor out = x;
        for (std::size_t i = 0; i < out.size(); ++i)
            out.values[i] += g * g * s.values[i] + g * rng.normal();
        return out;
    }

    const double sh = sched.sigma(t_hi), sl = sched.sigma(t_lo);
    const double dv = sh * sh - sl * sl;
    const ImageTensor s = score(x, cond, t_hi);
    const double noise_scale = std::sqrt(dv);
    ImageTensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] += dv * s.values[i] + noise_scale * rng.normal();
    return out;
}

ImageTensor corrector_step(const ScoreFn& score, const ImageTensor& x, const ImageTensor* cond,
                           double t, double snr, Rng& rng, double* eps_out) {
    if (!(t > 0.0 && t <= 1.0)) throw std::domain_error("corrector_step: t outside (0,1]");
    const ImageTensor s = score(x, cond, t);
    const double s_norm = l2_norm(s);
    if (s_norm == 0.0) {
        if (eps_out) *eps_out = 0.0;
        return x;
    }
    ImageTensor z(x.height, x.width, x.channels);
    fill_standard_normal(z, rng);
    const double z_norm = l2_norm(z);
    const double eps = 2.0 * (snr * z_norm / s_norm) * (snr * z_norm / s_norm);
    if (eps_out) *eps_out = eps;
    const double noise_scale = std::sqrt(2.0 * eps);
    ImageTensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] += eps * s.values[i] + noise_scale * z.values[i];
    return out;
}

ImageTensor run_reverse_chain(const ScoreFn& score, ImageTensor x, const ImageTensor* cond,
                              double t_scale, const SamplerConfig& cfg,
                              const sde::SigmaSchedule& sched, Rng& rng,
                              std::vector<StepTrace>* trace) {
    cfg.validate();
    const int N = cfg.n_steps;
    for (int n = N - 1; n >= 0; --n) {
        const double t_hi = (static_cast<double>(n + 1) / N) * t_scale;
        const double t_lo = (static_cast<double>(n) / N) * t_scale;
        x = predictor_step(score, x, cond, t_hi, t_lo, sched, rng, cfg.literal_paper_updates);
        double eps = 0.0;
        if (t_lo >= cfg.t_eps) {
            for (int k = 0; k < cfg.corrector_steps; ++k)
                x = corrector_step(score, x, cond, t_lo, cfg.snr, rng, &eps);
        }
        if (trace) trace->push_back({n, t_lo, sched.sigma(t_lo), eps, mean_abs(x)});
    }
    if (cfg.clamp_output)
        for (double& v : x.values) v = std::min(1.0, std::max(0.0, v));
    return x;
}

ImageTensor csm_initial_state(const ImageTensor& y, double t0, const sde::SigmaSchedule& sched,
                              Rng& rng) {
    const double s0 = sched.sigma(t0);
    ImageTensor x = y;
    for (double& v : x.values) v += s0 * rng.normal();
    return x;
}

ImageTensor sample_csm(const net::ScoreModel& model, const ImageTensor& y,
                       const SamplerConfig& cfg, const sde::SigmaSchedule& sched,
                       std::vector<StepTrace>* trace, ExecMode mode) {
    if (model.config().conditional)
        throw std::invalid_argument("sample_csm: needs an unconditionally trained score model");
    if (!model.config().noise_conditioned)
        throw std::invalid_argument("sample_csm: model is the U-Net baseline");
    cfg.validate();
    Rng rng(cfg.seed);
    ImageTensor x = csm_initial_state(y, cfg.t0, sched, rng);
    ModelScoreFn score(model, sched, mode);
    return run_reverse_chain(score, std::move(x), nullptr, cfg.t0, cfg, sched, rng, trace);
}

ImageTensor sample_ctm(const net::ScoreModel& model, const ImageTensor& y,
                       const SamplerConfig& cfg, const sde::SigmaSchedule& sched,
                       std::vector<StepTrace>* trace, ExecMode mode) {
    if (!model.config().conditional)
        throw std::invalid_argument("sample_ctm: needs a conditionally trained score model");
    if (!model.config().noise_conditioned)
        throw std::invalid_argument("sample_ctm: model is the U-Net baseline");
    cfg.validate();
    Rng rng(cfg.seed);
    ImageTensor x = sde::prior_sample(y.height, y.width, y.channels, sched, rng);
    ModelScoreFn score(model, sched, mode);
    return run_reverse_chain(score, std::move(x), &y, 1.0, cfg, sched, rng, trace);
}

ImageTensor sample_unet(const net::ScoreModel& model, const ImageTensor& y, ExecMode mode) {
    return model.unet_forward(y, mode);
}

void write_trace(const std::string& path, const std::vector<StepTrace>& trace) {
    std::ofstream f(path);
    if (!f) throw DataError("write_trace: cannot open " + path);
    for (const auto& s : trace)
        f << s.n << '\t' << s.t << '\t' << s.sigma << '\t' << s.corrector_epsilon << '\n';
    if (!f) throw DataError("write_trace: write failed for " + path);
}

}  // namespace xrgen::sample
