#pragma once

#include <string>
#include <vector>

#include "xrgen/dataset.hpp"
#include "xrgen/sampler.hpp"
#include "xrgen/scorenet.hpp"

namespace xrgen::metrics {

double mae(const ImageTensor& pred, const ImageTensor& label);

// 10*log10(peak^2 / MSE); +infinity when MSE = 0 (capped at kPsnrCapDb in
// reports and flagged there).
double psnr(const ImageTensor& pred, const ImageTensor& label, double peak = 1.0);
inline constexpr double kPsnrCapDb = 99.0;

// Dice overlap of {a > thr_a} against {b > thr_b}.
double dice(const ImageTensor& a, double thr_a, const ImageTensor& b, double thr_b);

struct EvalRow {
    std::string method;
    std::string condition;
    double mae_mean = 0.0, mae_std = 0.0;
    double psnr_mean_db = 0.0, psnr_std_db = 0.0;
    int n_images = 0;
    int psnr_capped = 0;  // images whose PSNR hit the +inf sentinel
};

struct PerImage {
    int phantom_id = 0, view_index = 0;
    double mae = 0.0, psnr_db = 0.0;
    bool capped = false;
};

struct EvalSection {
    EvalRow row;
    std::vector<PerImage> detail;
};

// Runs the method's sampler on every test condition and aggregates MAE/PSNR
// (mean +/- population std). Deterministic given cfg.seed: image i samples
// with seed derive_seed(cfg.seed, i).
EvalSection evaluate_split(const std::string& method, const net::ScoreModel& model,
                           const sde::SigmaSchedule& sched,
                           const std::vector<data::DataItem>& test_items,
                           data::ConditionType condition_type, const sample::SamplerConfig& cfg);

void write_report(const std::string& path, const std::vector<EvalRow>& rows,
                  std::uint32_t config_hash, std::uint64_t seed);
void write_detail(const std::string& path, const std::vector<EvalSection>& sections);

}  // namespace xrgen::metrics
