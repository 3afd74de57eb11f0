#pragma once

#include <cstdint>
#include <vector>

#include "xrgen/scorenet.hpp"
#include "xrgen/sde.hpp"

namespace xrgen::sample {

// Score source for the reverse chain: the trained network in production,
// analytic closed forms in the oracles.
struct ScoreFn {
    virtual ~ScoreFn() = default;
    virtual ImageTensor operator()(const ImageTensor& x, const ImageTensor* cond,
                                   double t) const = 0;
};

struct ModelScoreFn final : ScoreFn {
    const net::ScoreModel* model;
    const sde::SigmaSchedule* sched;
    ExecMode mode;
    ModelScoreFn(const net::ScoreModel& m, const sde::SigmaSchedule& s,
                 ExecMode mode_ = exec_mode())
        : model(&m), sched(&s), mode(mode_) {}
    ImageTensor operator()(const ImageTensor& x, const ImageTensor* cond, double t) const override {
        return model->score_forward(*sched, x, cond, t, mode);
    }
};

// Exact score of the marginal of N(0, data_var I) data under the VE kernel:
// s(x,t) = -x / (data_var + sigma_t^2).
struct GaussianAnalyticScore final : ScoreFn {
    double data_var;
    const sde::SigmaSchedule* sched;
    GaussianAnalyticScore(double var, const sde::SigmaSchedule& s) : data_var(var), sched(&s) {}
    ImageTensor operator()(const ImageTensor& x, const ImageTensor*, double t) const override {
        const double v = data_var + sched->sigma(t) * sched->sigma(t);
        ImageTensor out = x;
        for (double& e : out.values) e = -e / v;
        return out;
    }
};

struct SamplerConfig {
    int n_steps = 500;
    double t0 = 0.4;                   // CSM starting time
    double snr = 0.4;                  // Langevin corrector signal-to-noise ratio
    int corrector_steps = 1;           // per predictor step
    bool clamp_output = true;
    std::uint64_t seed = 0;
    bool literal_paper_updates = false;  // Delta-t-free update, for comparison only
    double t_eps = 1e-5;

    void validate() const;
};

struct StepTrace {
    int n = 0;
    double t = 0.0;
    double sigma = 0.0;
    double corrector_epsilon = 0.0;  // 0 when skipped
    double mean_abs = 0.0;
};

// Discrete VE reverse-diffusion update from t_hi down to t_lo:
//   x <- x + (sigma_hi^2 - sigma_lo^2) * s(x, t_hi) + sqrt(sigma_hi^2 - sigma_lo^2) * z.
// With literal=true, applies the update exactly as printed in the sampling
// algorithms (g(t_lo)^2 * s + g(t_lo) * z), which has no step-size scaling.
ImageTensor predictor_step(const ScoreFn& score, const ImageTensor& x, const ImageTensor* cond,
                           double t_hi, double t_lo, const sde::SigmaSchedule& sched, Rng& rng,
                           bool literal = false);

// One Langevin update x <- x + eps*s + sqrt(2 eps)*z with
// eps = 2 (snr * ||z|| / ||s||)^2; skipped (eps=0) when ||s|| vanishes.
// Returns eps through eps_out when non-null.
ImageTensor corrector_step(const ScoreFn& score, const ImageTensor& x, const ImageTensor* cond,
                           double t, double snr, Rng& rng, double* eps_out = nullptr);

// Shared predictor-corrector chain on the grid t_n = (n/N) * t_scale,
// starting from the given state at t = t_scale.
ImageTensor run_reverse_chain(const ScoreFn& score, ImageTensor x, const ImageTensor* cond,
                              double t_scale, const SamplerConfig& cfg,
                              const sde::SigmaSchedule& sched, Rng& rng,
                              std::vector<StepTrace>* trace = nullptr);

// CSM prior: y + sigma(t0) * z, the perturbed segmentation the reverse chain
// starts from.
ImageTensor csm_initial_state(const ImageTensor& y, double t0, const sde::SigmaSchedule& sched,
                              Rng& rng);

// Conditional sampling (SDEdit-style): start from y + sigma_{t0} * z with an
// unconditionally trained score model.
ImageTensor sample_csm(const net::ScoreModel& model, const ImageTensor& y,
                       const SamplerConfig& cfg, const sde::SigmaSchedule& sched,
                       std::vector<StepTrace>* trace = nullptr, ExecMode mode = exec_mode());

// Conditional training: start from the sigma_max prior with the condition
// concatenated at every network call.
ImageTensor sample_ctm(const net::ScoreModel& model, const ImageTensor& y,
                       const SamplerConfig& cfg, const sde::SigmaSchedule& sched,
                       std::vector<StepTrace>* trace = nullptr, ExecMode mode = exec_mode());

// Baseline: a single deterministic U-Net pass.
ImageTensor sample_unet(const net::ScoreModel& model, const ImageTensor& y,
                        ExecMode mode = exec_mode());

void write_trace(const std::string& path, const std::vector<StepTrace>& trace);

}  // namespace xrgen::sample
