#include "xrgen/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "xrgen/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace xrgen::train {

Weighting weighting_from_string(const std::string& s) {
    if (s == "sigma_squared") return Weighting::SigmaSquared;
    if (s == "none") return Weighting::None;
    throw std::invalid_argument("unknown loss weighting: " + s);
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::Csm: return "csm";
        case TrainMode::Ctm: return "ctm";
        case TrainMode::Unet: return "unet";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(t_eps > 0.0 && t_eps < 1.0)) throw std::invalid_argument("TrainConfig: t_eps in (0,1)");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate > 0");
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
}

DsmDraws make_dsm_draws(const std::vector<const data::DataItem*>& batch, Rng& rng, double t_eps) {
    DsmDraws d;
    d.t.resize(batch.size());
    d.z.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        d.t[i] = rng.uniform(t_eps, 1.0);
        d.z[i] = ImageTensor(batch[i]->radiograph.height, batch[i]->radiograph.width,
                             batch[i]->radiograph.channels);
        fill_standard_normal(d.z[i], rng);
    }
    return d;
}

double dsm_loss(const net::ScoreModel& model, const sde::SigmaSchedule& sched,
                const std::vector<const data::DataItem*>& batch, const DsmDraws& draws,
                Weighting weighting, std::vector<double>* gbuf, ExecMode mode) {
    if (batch.empty()) throw std::invalid_argument("dsm_loss: empty batch");
    if (draws.t.size() != batch.size() || draws.z.size() != batch.size())
        throw std::invalid_argument("dsm_loss: draws do not match batch");
    const bool conditional = model.config().conditional;
    const std::size_t B = batch.size();

    std::vector<double> losses(B, 0.0);
    const int nthreads = mode == ExecMode::Parallel ? std::min<int>(max_threads(), B) : 1;
    std::vector<std::vector<double>> tgrads(gbuf ? nthreads : 0);
    std::exception_ptr first_error;

#pragma omp parallel num_threads(nthreads) if (nthreads > 1)
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        auto ws = model.make_workspace();
        if (gbuf) tgrads[tid].assign(model.parameter_count(), 0.0);

#pragma omp for schedule(static)
        for (std::size_t b = 0; b < B; ++b) {
            try {
                const data::DataItem& item = *batch[b];
                const double t = draws.t[b];
                const double sigma = sched.sigma(t);
                const ImageTensor xt = sde::perturb(item.radiograph, sched, t, draws.z[b]);
                const ImageTensor target = sde::kernel_score(xt, item.radiograph, sched, t);
                const double w = weighting == Weighting::SigmaSquared ? sigma * sigma : 1.0;
                const double D = static_cast<double>(xt.size());

                const ImageTensor* cond = conditional ? &item.condition : nullptr;
                ImageTensor raw =
                    model.raw_forward(xt, cond, std::log(sigma), *ws, ExecMode::Serial);

                // score = raw / sigma; per-sample loss = w * mean_pixels((score - target)^2)
                double acc = 0.0;
                ImageTensor draw(raw.height, raw.width, raw.channels);
                const double inv_sigma = 1.0 / sigma;
                for (std::size_t i = 0; i < raw.size(); ++i) {
                    const double r = raw.values[i] * inv_sigma - target.values[i];
                    acc += r * r;
                    draw.values[i] = 2.0 * w * r * inv_sigma / (D * static_cast<double>(B));
                }
                losses[b] = w * acc / D;

                if (gbuf) model.backward(draw, *ws, tgrads[tid], ExecMode::Serial);
            } catch (...) {
#pragma omp critical
                if (!first_error) first_error = std::current_exception();
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) loss += losses[b];
    loss /= static_cast<double>(B);

    if (!std::isfinite(loss)) {
        std::size_t bad = 0;
        for (std::size_t b = 0; b < B; ++b)
            if (!std::isfinite(losses[b])) bad = b;
        const double t = draws.t[bad];
        std::ostringstream os;
        os << "dsm_loss: non-finite loss (t=" << t << ", sigma=" << sched.sigma(t)
           << ", weighted residual=" << losses[bad] << ")";
        throw NumericError(os.str());
    }

    if (gbuf)
        for (int tid = 0; tid < nthreads; ++tid)
            for (std::size_t i = 0; i < gbuf->size(); ++i) (*gbuf)[i] += tgrads[tid][i];
    return loss;
}

double l1_loss(const net::ScoreModel& model, const std::vector<const data::DataItem*>& batch,
               std::vector<double>* gbuf, ExecMode mode) {
    if (batch.empty()) throw std::invalid_argument("l1_loss: empty batch");
    if (model.config().noise_conditioned)
        throw std::invalid_argument("l1_loss: model is not the U-Net baseline");
    const std::size_t B = batch.size();

    std::vector<double> losses(B, 0.0);
    const int nthreads = mode == ExecMode::Parallel ? std::min<int>(max_threads(), B) : 1;
    std::vector<std::vector<double>> tgrads(gbuf ? nthreads : 0);
    std::exception_ptr first_error;

#pragma omp parallel num_threads(nthreads) if (nthreads > 1)
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        auto ws = model.make_workspace();
        if (gbuf) tgrads[tid].assign(model.parameter_count(), 0.0);

#pragma omp for schedule(static)
        for (std::size_t b = 0; b < B; ++b) {
            try {
                const data::DataItem& item = *batch[b];
                ImageTensor raw = model.raw_forward(item.condition, nullptr, std::nullopt, *ws,
                                                    ExecMode::Serial);
                const double D = static_cast<double>(raw.size());
                double acc = 0.0;
                ImageTensor draw(raw.height, raw.width, raw.channels);
                for (std::size_t i = 0; i < raw.size(); ++i) {
                    const double pred = std::min(1.0, std::max(0.0, raw.values[i]));
                    const double diff = pred - item.radiograph.values[i];
                    acc += std::fabs(diff);
                    const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                    // clamp passes gradient on [0,1]; the boundary counts as inside
                    const bool active = raw.values[i] >= 0.0 && raw.values[i] <= 1.0;
                    draw.values[i] = active ? sgn / (D * static_cast<double>(B)) : 0.0;
                }
                losses[b] = acc / D;
                if (gbuf) model.backward(draw, *ws, tgrads[tid], ExecMode::Serial);
            } catch (...) {
#pragma omp critical
                if (!first_error) first_error = std::current_exception();
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) loss += losses[b];
    loss /= static_cast<double>(B);
    if (!std::isfinite(loss)) throw NumericError("l1_loss: non-finite loss");

    if (gbuf)
        for (int tid = 0; tid < nthreads; ++tid)
            for (std::size_t i = 0; i < gbuf->size(); ++i) (*gbuf)[i] += tgrads[tid][i];
    return loss;
}

namespace {

struct Adam {
    double lr;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;

    explicit Adam(std::size_t n, double lr_) : lr(lr_), m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

void check_mode(const net::ScoreModel& model, TrainMode mode, bool items_have_condition) {
    const auto& cfg = model.config();
    switch (mode) {
        case TrainMode::Csm:
            if (cfg.conditional || !cfg.noise_conditioned)
                throw std::invalid_argument("train: csm needs an unconditional score model");
            break;
        case TrainMode::Ctm:
            if (!cfg.conditional || !cfg.noise_conditioned)
                throw std::invalid_argument("train: ctm needs a conditional score model");
            if (!items_have_condition)
                throw std::invalid_argument("train: ctm needs condition images");
            break;
        case TrainMode::Unet:
            if (cfg.noise_conditioned)
                throw std::invalid_argument("train: unet needs the noise-free baseline model");
            if (!items_have_condition)
                throw std::invalid_argument("train: unet needs condition images");
            break;
    }
}

double eval_loss(const net::ScoreModel& model, TrainMode mode, const sde::SigmaSchedule& sched,
                 const std::vector<const data::DataItem*>& items, const DsmDraws& val_draws,
                 Weighting weighting, int batch_size) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < items.size(); start += batch_size) {
        const std::size_t end = std::min(items.size(), start + batch_size);
        std::vector<const data::DataItem*> batch(items.begin() + start, items.begin() + end);
        double loss;
        if (mode == TrainMode::Unet) {
            loss = l1_loss(model, batch, nullptr);
        } else {
            DsmDraws draws;
            draws.t.assign(val_draws.t.begin() + start, val_draws.t.begin() + end);
            draws.z.assign(val_draws.z.begin() + start, val_draws.z.begin() + end);
            loss = dsm_loss(model, sched, batch, draws, weighting, nullptr);
        }
        total += loss * static_cast<double>(end - start);
        count += end - start;
    }
    return total / static_cast<double>(count);
}

}  // namespace

TrainReport train_model(net::ScoreModel& model, TrainMode mode, const sde::SigmaSchedule& sched,
                        const std::vector<data::DataItem>& train_items,
                        const std::vector<data::DataItem>& val_items, const TrainConfig& cfg,
                        const std::string& out_dir) {
    cfg.validate();
    if (train_items.empty()) throw std::invalid_argument("train: empty training set");
    for (const auto& it : train_items)
        if (it.split == "test") throw std::invalid_argument("train: test-split data in training set");
    for (const auto& it : val_items)
        if (it.split == "test") throw std::invalid_argument("train: test-split data in validation set");
    const bool have_cond = !train_items.empty() && train_items[0].condition.size() > 0;
    check_mode(model, mode, have_cond);

    fs::create_directories(out_dir);
    std::ofstream log((fs::path(out_dir) / "train_log.txt").string());
    if (!log) throw DataError("train: cannot open train log in " + out_dir);

    Rng shuffle_rng(derive_seed(cfg.seed, 11));
    Rng draw_rng(derive_seed(cfg.seed, 12));

    std::vector<const data::DataItem*> val_ptrs;
    for (const auto& it : val_items) val_ptrs.push_back(&it);
    DsmDraws val_draws;
    if (mode != TrainMode::Unet && !val_items.empty()) {
        Rng val_rng(derive_seed(cfg.seed, 13));
        val_draws = make_dsm_draws(val_ptrs, val_rng, cfg.t_eps);
    }

    Adam adam(model.parameter_count(), cfg.learning_rate);
    std::vector<double> grads(model.parameter_count(), 0.0);
    std::vector<std::size_t> order(train_items.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    report.best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    bool stop = false;

    for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
        const auto tic = std::chrono::steady_clock::now();
        // Fisher-Yates shuffle with the seeded source
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            const std::size_t j = shuffle_rng.next_u64() % (i + 1);
            std::swap(order[i], order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const data::DataItem*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train_items[order[i]]);

            std::fill(grads.begin(), grads.end(), 0.0);
            double loss;
            try {
                if (mode == TrainMode::Unet) {
                    loss = l1_loss(model, batch, &grads);
                } else {
                    const DsmDraws draws = make_dsm_draws(batch, draw_rng, cfg.t_eps);
                    loss = dsm_loss(model, sched, batch, draws, cfg.loss_weighting, &grads);
                }
            } catch (const NumericError&) {
                // keep the last good checkpoint on a numeric failure
                report.last_checkpoint = (fs::path(out_dir) / "last.sdf").string();
                net::save_model(model, report.last_checkpoint);
                throw;
            }
            adam.step(model.params().values, grads);
            epoch_loss += loss * static_cast<double>(end - start);
            epoch_count += end - start;
            ++report.steps;
            if (cfg.max_steps > 0 && report.steps >= cfg.max_steps) {
                stop = true;
                break;
            }
        }
        epoch_loss /= static_cast<double>(epoch_count);

        double val_loss = epoch_loss;
        if (!val_items.empty())
            val_loss = eval_loss(model, mode, sched, val_ptrs, val_draws, cfg.loss_weighting,
                                 cfg.batch_size);

        const auto toc = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(toc - tic).count();
        report.rows.push_back({epoch, epoch_loss, val_loss, secs});
        log << epoch << '\t' << epoch_loss << '\t' << val_loss << '\t' << secs << '\n';
        log.flush();

        if (val_loss < report.best_val_loss) {
            report.best_val_loss = val_loss;
            report.best_checkpoint = (fs::path(out_dir) / "best.sdf").string();
            net::save_model(model, report.best_checkpoint);
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_%04d.sdf", epoch);
            net::save_model(model, (fs::path(out_dir) / name).string());
        }
        if (cfg.early_stop_patience > 0 && epochs_since_best >= cfg.early_stop_patience)
            stop = true;
    }

    report.last_checkpoint = (fs::path(out_dir) / "last.sdf").string();
    net::save_model(model, report.last_checkpoint);
    if (report.best_checkpoint.empty()) report.best_checkpoint = report.last_checkpoint;
    return report;
}

std::vector<data::DataItem> make_gaussian_toy_items(int n, double mu, double s,
                                                    std::uint64_t seed) {
    Rng rng(seed);
    std::vector<data::DataItem> items(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        items[i].phantom_id = i;
        items[i].split = "train";
        items[i].radiograph = ImageTensor(1, 1, 1);
        items[i].radiograph.values[0] = mu + s * rng.normal();
    }
    return items;
}

}  // namespace xrgen::train
