#include "xrgen/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "xrgen/errors.hpp"

namespace xrgen::metrics {

double mae(const ImageTensor& pred, const ImageTensor& label) {
    check_same_shape(pred, label, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::fabs(pred.values[i] - label.values[i]);
    return acc / static_cast<double>(pred.size());
}

double psnr(const ImageTensor& pred, const ImageTensor& label, double peak) {
    check_same_shape(pred, label, "psnr");
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.values[i] - label.values[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double dice(const ImageTensor& a, double thr_a, const ImageTensor& b, double thr_b) {
    check_same_shape(a, b, "dice");
    long na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool in_a = a.values[i] > thr_a;
        const bool in_b = b.values[i] > thr_b;
        na += in_a;
        nb += in_b;
        inter += in_a && in_b;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

EvalSection evaluate_split(const std::string& method, const net::ScoreModel& model,
                           const sde::SigmaSchedule& sched,
                           const std::vector<data::DataItem>& test_items,
                           data::ConditionType condition_type, const sample::SamplerConfig& cfg) {
    if (test_items.empty()) throw std::invalid_argument("evaluate_split: empty test split");
    EvalSection sec;
    sec.row.method = method;
    sec.row.condition = data::to_string(condition_type);
    sec.detail.resize(test_items.size());

    const long n = static_cast<long>(test_items.size());
#pragma omp parallel for schedule(dynamic) if (exec_mode() == ExecMode::Parallel)
    for (long i = 0; i < n; ++i) {
        const data::DataItem& item = test_items[i];
        sample::SamplerConfig icfg = cfg;
        icfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
        ImageTensor out;
        if (method == "csm") {
            out = sample::sample_csm(model, item.condition, icfg, sched, nullptr, ExecMode::Serial);
        } else if (method == "ctm") {
            out = sample::sample_ctm(model, item.condition, icfg, sched, nullptr, ExecMode::Serial);
        } else if (method == "unet") {
            out = sample::sample_unet(model, item.condition, ExecMode::Serial);
        } else {
            throw std::invalid_argument("evaluate_split: unknown method " + method);
        }
        PerImage& pi = sec.detail[i];
        pi.phantom_id = item.phantom_id;
        pi.view_index = item.view_index;
        pi.mae = mae(out, item.radiograph);
        const double p = psnr(out, item.radiograph);
        pi.capped = !std::isfinite(p);
        pi.psnr_db = pi.capped ? kPsnrCapDb : p;
    }

    double mae_sum = 0.0, psnr_sum = 0.0;
    for (const auto& pi : sec.detail) {
        mae_sum += pi.mae;
        psnr_sum += pi.psnr_db;
        sec.row.psnr_capped += pi.capped ? 1 : 0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    sec.row.mae_mean = mae_sum * inv_n;
    sec.row.psnr_mean_db = psnr_sum * inv_n;
    double mae_var = 0.0, psnr_var = 0.0;
    for (const auto& pi : sec.detail) {
        mae_var += (pi.mae - sec.row.mae_mean) * (pi.mae - sec.row.mae_mean);
        psnr_var += (pi.psnr_db - sec.row.psnr_mean_db) * (pi.psnr_db - sec.row.psnr_mean_db);
    }
    sec.row.mae_std = std::sqrt(mae_var * inv_n);  // population std
    sec.row.psnr_std_db = std::sqrt(psnr_var * inv_n);
    sec.row.n_images = static_cast<int>(n);
    return sec;
}

void write_report(const std::string& path, const std::vector<EvalRow>& rows,
                  std::uint32_t config_hash, std::uint64_t seed) {
    std::ofstream f(path);
    if (!f) throw DataError("write_report: cannot open " + path);
    f << "# config_hash=" << config_hash << " seed=" << seed << " std=population\n";
    f << "method\tcondition\tmae_mean\tmae_std\tpsnr_mean_db\tpsnr_std_db\tn_images\tpsnr_capped\n";
    f.precision(6);
    for (const auto& r : rows) {
        f << r.method << '\t' << r.condition << '\t' << r.mae_mean << '\t' << r.mae_std << '\t'
          << r.psnr_mean_db << '\t' << r.psnr_std_db << '\t' << r.n_images << '\t'
          << r.psnr_capped << '\n';
    }
    if (!f) throw DataError("write_report: write failed for " + path);
}

void write_detail(const std::string& path, const std::vector<EvalSection>& sections) {
    std::ofstream f(path);
    if (!f) throw DataError("write_detail: cannot open " + path);
    f << "method\tcondition\tphantom_id\tview_index\tmae\tpsnr_db\tpsnr_capped\n";
    f.precision(6);
    for (const auto& s : sections)
        for (const auto& pi : s.detail)
            f << s.row.method << '\t' << s.row.condition << '\t' << pi.phantom_id << '\t'
              << pi.view_index << '\t' << pi.mae << '\t' << pi.psnr_db << '\t' << (pi.capped ? 1 : 0)
              << '\n';
    if (!f) throw DataError("write_detail: write failed for " + path);
}

}  // namespace xrgen::metrics
