// xrgen: dataset generation, training, sampling and evaluation for
// segmentation-conditioned radiograph synthesis with a VE-SDE score model.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "xrgen/dataset.hpp"
#include "xrgen/errors.hpp"
#include "xrgen/metrics.hpp"
#include "xrgen/pgm.hpp"
#include "xrgen/runconfig.hpp"
#include "xrgen/sampler.hpp"
#include "xrgen/training.hpp"

namespace fs = std::filesystem;
using namespace xrgen;

namespace {

struct CommonArgs {
    std::string config_path;
    std::int64_t seed = -1;  // -1: keep config value
};

config::RunConfig load_config(const CommonArgs& c) {
    config::RunConfig cfg;
    if (!c.config_path.empty()) cfg.apply_file(c.config_path);
    if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
    cfg.validate();
    return cfg;
}

train::TrainMode method_from_string(const std::string& m) {
    if (m == "csm") return train::TrainMode::Csm;
    if (m == "ctm") return train::TrainMode::Ctm;
    if (m == "unet") return train::TrainMode::Unet;
    throw std::invalid_argument("unknown method: " + m);
}

void check_method_model(const std::string& method, const net::ScoreModelConfig& mc) {
    const bool ok = (method == "csm" && !mc.conditional && mc.noise_conditioned) ||
                    (method == "ctm" && mc.conditional && mc.noise_conditioned) ||
                    (method == "unet" && !mc.noise_conditioned);
    if (!ok)
        throw std::invalid_argument("checkpoint/method mismatch: model config block "
                                    "(conditional=" + std::to_string(mc.conditional) +
                                    ", noise_conditioned=" + std::to_string(mc.noise_conditioned) +
                                    ") does not fit method '" + method + "'");
}

int cmd_gen_data(const CommonArgs& common, const std::string& out_dir) {
    config::RunConfig cfg = load_config(common);
    phantom::PhantomParams params = cfg.phantom;
    params.seed = cfg.seed;
    const data::BuildResult res = data::build_dataset(cfg.n_phantoms, cfg.geometry, params,
                                                      derive_seed(cfg.seed, 7), cfg.bone_threshold,
                                                      out_dir);
    config::write_config((fs::path(out_dir) / "effective_config.cfg").string(), cfg);
    std::printf("phantoms: train=%d val=%d test=%d\n", res.n_train_phantoms, res.n_val_phantoms,
                res.n_test_phantoms);
    std::printf("images: %ld (%d views x %d phantoms)\n", res.images, cfg.geometry.n_views,
                cfg.n_phantoms);
    if (res.bone_warnings > 0)
        std::printf("warning: %ld bone pixels fell outside the contour support\n",
                    res.bone_warnings);
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& data_dir, const std::string& method_s,
              const std::string& condition_s, const std::string& out_dir) {
    config::RunConfig cfg = load_config(common);
    const train::TrainMode mode = method_from_string(method_s);
    const data::ConditionType ct = data::condition_type_from_string(condition_s);

    const data::DatasetManifest manifest =
        data::read_manifest((fs::path(data_dir) / "manifest.tsv").string());
    const bool need_cond = mode != train::TrainMode::Csm;
    const auto train_items = data::load_split(data_dir, manifest, "train", ct, need_cond);
    const auto val_items = data::load_split(data_dir, manifest, "val", ct, need_cond);
    if (train_items.empty()) throw DataError("train: dataset has no training images");

    const bool conditional = mode == train::TrainMode::Ctm;
    const bool noise_conditioned = mode != train::TrainMode::Unet;
    net::ScoreModelConfig mc = cfg.model_config(conditional, noise_conditioned);
    net::ScoreModel model(mc, derive_seed(cfg.seed, 1000 + static_cast<int>(mode)));

    train::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const sde::SigmaSchedule sched = cfg.schedule();
    const train::TrainReport report =
        train::train_model(model, mode, sched, train_items, val_items, tc, out_dir);
    config::write_config((fs::path(out_dir) / "effective_config.cfg").string(), cfg);
    std::printf("trained %s for %zu epochs (%ld steps), best val loss %.6g\n", method_s.c_str(),
                report.rows.size(), report.steps, report.best_val_loss);
    std::printf("best checkpoint: %s\n", report.best_checkpoint.c_str());
    return 0;
}

int cmd_sample(const CommonArgs& common, const std::string& ckpt, const std::string& method_s,
               const std::string& condition_file, const std::string& out_path,
               const std::string& trace_path) {
    config::RunConfig cfg = load_config(common);
    net::ScoreModel model = net::load_model(ckpt);
    check_method_model(method_s, model.config());
    const ImageTensor y = pgm::read(condition_file);
    const sde::SigmaSchedule sched = cfg.schedule();
    sample::SamplerConfig sc = cfg.sampler;
    sc.seed = cfg.seed;

    std::vector<sample::StepTrace> trace;
    std::vector<sample::StepTrace>* tp = trace_path.empty() ? nullptr : &trace;
    ImageTensor out;
    if (method_s == "csm") out = sample::sample_csm(model, y, sc, sched, tp);
    else if (method_s == "ctm") out = sample::sample_ctm(model, y, sc, sched, tp);
    else out = sample::sample_unet(model, y);

    if (out_path.find('/') != std::string::npos)
        fs::create_directories(fs::path(out_path).parent_path());
    pgm::write(out_path, out);
    if (tp) sample::write_trace(trace_path, trace);
    config::write_config(out_path + ".cfg", cfg);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& data_dir, const std::string& ckpt_dir,
             const std::vector<std::string>& methods, const std::vector<std::string>& conditions,
             const std::string& out_dir) {
    config::RunConfig cfg = load_config(common);
    const data::DatasetManifest manifest =
        data::read_manifest((fs::path(data_dir) / "manifest.tsv").string());
    const sde::SigmaSchedule sched = cfg.schedule();
    sample::SamplerConfig sc = cfg.sampler;
    sc.seed = cfg.seed;

    // checkpoint layout convention: <dir>/csm/best.sdf, <dir>/<method>_<condition>/best.sdf
    std::vector<std::string> missing;
    auto ckpt_path = [&](const std::string& m, const std::string& c) {
        const std::string sub = m == "csm" ? m : m + "_" + c;
        return (fs::path(ckpt_dir) / sub / "best.sdf").string();
    };
    for (const auto& m : methods)
        for (const auto& c : conditions)
            if (!fs::exists(ckpt_path(m, c))) missing.push_back(ckpt_path(m, c));
    if (!missing.empty()) {
        std::string msg = "eval: missing checkpoints:";
        for (const auto& p : missing) msg += " " + p;
        throw DataError(msg);
    }

    fs::create_directories(out_dir);
    std::vector<metrics::EvalRow> rows;
    std::vector<metrics::EvalSection> sections;
    for (const auto& m : methods) {
        for (const auto& c : conditions) {
            const data::ConditionType ct = data::condition_type_from_string(c);
            const auto test_items = data::load_split(data_dir, manifest, "test", ct, true);
            if (test_items.empty()) throw DataError("eval: dataset has no test images");
            net::ScoreModel model = net::load_model(ckpt_path(m, c));
            check_method_model(m, model.config());
            metrics::EvalSection sec =
                metrics::evaluate_split(m, model, sched, test_items, ct, sc);
            rows.push_back(sec.row);
            sections.push_back(std::move(sec));
            std::printf("%s/%s: MAE %.6g +/- %.6g, PSNR %.4g +/- %.3g dB (n=%d)\n", m.c_str(),
                        c.c_str(), rows.back().mae_mean, rows.back().mae_std,
                        rows.back().psnr_mean_db, rows.back().psnr_std_db, rows.back().n_images);
        }
    }
    metrics::write_report((fs::path(out_dir) / "report.tsv").string(), rows, cfg.hash(), cfg.seed);
    metrics::write_detail((fs::path(out_dir) / "per_image.tsv").string(), sections);
    config::write_config((fs::path(out_dir) / "effective_config.cfg").string(), cfg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segmentation-conditioned radiograph synthesis (VE-SDE score diffusion)"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string out, data_dir, method, condition = "contour", ckpt, cond_file, trace_path,
                ckpt_dir;
    std::vector<std::string> methods, conditions;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "config file (key = value lines)");
        sub->add_option("--seed", common.seed, "override the config seed");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the phantom DRR dataset");
    add_common(gen);
    gen->add_option("--out", out, "output dataset directory")->required();

    CLI::App* tr = app.add_subcommand("train", "train a model");
    add_common(tr);
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--method", method, "csm | ctm | unet")->required();
    tr->add_option("--condition", condition, "contour | contour_bone");
    tr->add_option("--out", out, "run directory for checkpoints and logs")->required();

    CLI::App* sa = app.add_subcommand("sample", "generate one radiograph from a condition");
    add_common(sa);
    sa->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    sa->add_option("--method", method, "csm | ctm | unet")->required();
    sa->add_option("--condition-file", cond_file, "condition image (PGM)")->required();
    sa->add_option("--out", out, "output PGM path")->required();
    sa->add_option("--trace", trace_path, "optional per-step trace file");

    CLI::App* ev = app.add_subcommand("eval", "evaluate methods on the test split");
    add_common(ev);
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--checkpoint-dir", ckpt_dir, "directory holding <method>[_<condition>]/best.sdf")
        ->required();
    ev->add_option("--methods", methods, "methods to evaluate")->delimiter(',')->required();
    ev->add_option("--conditions", conditions, "condition types")->delimiter(',');
    ev->add_option("--out", out, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(common, out);
        if (tr->parsed()) return cmd_train(common, data_dir, method, condition, out);
        if (sa->parsed()) return cmd_sample(common, ckpt, method, cond_file, out, trace_path);
        if (ev->parsed()) {
            if (conditions.empty()) conditions = {"contour"};
            return cmd_eval(common, data_dir, ckpt_dir, methods, conditions, out);
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
