#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xrgen/dataset.hpp"
#include "xrgen/scorenet.hpp"
#include "xrgen/sde.hpp"

namespace xrgen::train {

enum class Weighting { SigmaSquared, None };
enum class TrainMode { Csm, Ctm, Unet };

Weighting weighting_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct TrainConfig {
    int batch_size = 16;
    double learning_rate = 2e-4;
    int max_epochs = 300;
    double t_eps = 1e-5;
    Weighting loss_weighting = Weighting::SigmaSquared;
    std::uint64_t seed = 0;
    int checkpoint_every = 10;       // epochs
    int early_stop_patience = 0;     // 0 disables early stopping
    long max_steps = 0;              // 0 = no step cap

    void validate() const;
};

// Per-sample (t, z) draws for denoising score matching; kept explicit so
// losses are deterministic functions of (parameters, batch, draws).
struct DsmDraws {
    std::vector<double> t;
    std::vector<ImageTensor> z;
};

DsmDraws make_dsm_draws(const std::vector<const data::DataItem*>& batch, Rng& rng, double t_eps);

// DSM objective: residual between the model score and the kernel score of the
// perturbed sample, weighted by sigma_t^2 (or unweighted), averaged over the
// batch with a per-pixel mean inside each sample. Gradients are exact and
// accumulate into gbuf when it is non-null. Conditions are concatenated iff
// the model is conditional. Throws NumericError on a non-finite loss.
double dsm_loss(const net::ScoreModel& model, const sde::SigmaSchedule& sched,
                const std::vector<const data::DataItem*>& batch, const DsmDraws& draws,
                Weighting weighting, std::vector<double>* gbuf, ExecMode mode = exec_mode());

// Mean absolute error of the clamped U-Net prediction against the radiograph.
double l1_loss(const net::ScoreModel& model, const std::vector<const data::DataItem*>& batch,
               std::vector<double>* gbuf, ExecMode mode = exec_mode());

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    std::string best_checkpoint;
    std::string last_checkpoint;
    double best_val_loss = 0.0;
    long steps = 0;
};

// Adam (beta1=0.9, beta2=0.999, eps=1e-8) over shuffled mini-batches, fully
// deterministic given the seed. Writes train_log.txt and checkpoints under
// out_dir; keeps the best-validation checkpoint as best.sdf. Validation draws
// are fixed per run so epoch losses are comparable.
TrainReport train_model(net::ScoreModel& model, TrainMode mode, const sde::SigmaSchedule& sched,
                        const std::vector<data::DataItem>& train_items,
                        const std::vector<data::DataItem>& val_items, const TrainConfig& cfg,
                        const std::string& out_dir);

// 1x1x1 "images" drawn from N(mu, s^2); the 1-D correctness oracle runs the
// ordinary training path on these.
std::vector<data::DataItem> make_gaussian_toy_items(int n, double mu, double s,
                                                    std::uint64_t seed);

}  // namespace xrgen::train
