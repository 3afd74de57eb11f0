#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xrgen/phantom.hpp"
#include "xrgen/projector.hpp"
#include "xrgen/sampler.hpp"
#include "xrgen/scorenet.hpp"
#include "xrgen/training.hpp"

namespace xrgen::config {

// Line-oriented `key = value` configuration with dotted section prefixes
// (e.g. `sampler.n_steps = 500`); '#' starts a comment. Flags override file
// values; the effective config is echoed next to every command's outputs.
struct RunConfig {
    double sigma_min = 0.01;
    double sigma_max = 128.0;

    int n_phantoms = 16;
    phantom::PhantomParams phantom;     // phantom.seed derives from the global seed
    double bone_threshold = 0.0;

    proj::ProjectionGeometry geometry;  // detector defaults to 64x64, 60 views

    std::vector<int> model_levels = {64, 32, 16};
    std::vector<int> model_channels = {32, 64, 64};
    int fourier_dim = 64;
    double fourier_scale = 16.0;

    train::TrainConfig train;
    sample::SamplerConfig sampler;

    std::uint64_t seed = 42;

    void apply_file(const std::string& path);
    void apply_kv(const std::string& key, const std::string& value);
    std::string serialize() const;       // canonical key order
    std::uint32_t hash() const;          // CRC32 of serialize()
    void validate() const;

    sde::SigmaSchedule schedule() const { return {sigma_min, sigma_max}; }
    net::ScoreModelConfig model_config(bool conditional, bool noise_conditioned) const;
};

void write_config(const std::string& path, const RunConfig& cfg);

}  // namespace xrgen::config
