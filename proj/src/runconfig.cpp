#include "xrgen/runconfig.hpp"

#include <fstream>
#include <sstream>
#include <zlib.h>

#include "xrgen/errors.hpp"

namespace xrgen::config {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::istringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw std::invalid_argument("config: empty integer list");
    return out;
}

std::string int_list_to_string(const std::vector<int>& v) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) ss << ",";
        ss << v[i];
    }
    return ss.str();
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: expected boolean, got: " + v);
}

}  // namespace

void RunConfig::apply_kv(const std::string& key, const std::string& value) {
    try {
        if (key == "schedule.sigma_min") sigma_min = std::stod(value);
        else if (key == "schedule.sigma_max") sigma_max = std::stod(value);
        else if (key == "phantom.n_phantoms") n_phantoms = std::stoi(value);
        else if (key == "phantom.grid") phantom.grid = std::stoi(value);
        else if (key == "phantom.spacing_mm") phantom.spacing_mm = std::stod(value);
        else if (key == "phantom.leg_radius_min") phantom.leg_radius_min = std::stod(value);
        else if (key == "phantom.leg_radius_max") phantom.leg_radius_max = std::stod(value);
        else if (key == "phantom.bone_radius_min") phantom.bone_radius_min = std::stod(value);
        else if (key == "phantom.bone_radius_max") phantom.bone_radius_max = std::stod(value);
        else if (key == "phantom.bone_offset_min") phantom.bone_offset_min = std::stod(value);
        else if (key == "phantom.bone_offset_max") phantom.bone_offset_max = std::stod(value);
        else if (key == "phantom.soft_tissue_mu") phantom.soft_tissue_mu = std::stod(value);
        else if (key == "phantom.bone_mu") phantom.bone_mu = std::stod(value);
        else if (key == "phantom.n_bones") phantom.n_bones = std::stoi(value);
        else if (key == "phantom.bone_threshold") bone_threshold = std::stod(value);
        else if (key == "geometry.n_views") {
            geometry.n_views = std::stoi(value);
            geometry.angular_increment_deg = 360.0 / geometry.n_views;
        } else if (key == "geometry.detector") {
            geometry.detector_h = geometry.detector_w = std::stoi(value);
        } else if (key == "geometry.pixel_size_mm") geometry.detector_pixel_size = std::stod(value);
        else if (key == "model.levels") model_levels = parse_int_list(value);
        else if (key == "model.channels") model_channels = parse_int_list(value);
        else if (key == "model.fourier_dim") fourier_dim = std::stoi(value);
        else if (key == "model.fourier_scale") fourier_scale = std::stod(value);
        else if (key == "train.batch_size") train.batch_size = std::stoi(value);
        else if (key == "train.learning_rate") train.learning_rate = std::stod(value);
        else if (key == "train.max_epochs") train.max_epochs = std::stoi(value);
        else if (key == "train.t_eps") train.t_eps = std::stod(value);
        else if (key == "train.loss_weighting")
            train.loss_weighting = train::weighting_from_string(value);
        else if (key == "train.checkpoint_every") train.checkpoint_every = std::stoi(value);
        else if (key == "train.early_stop_patience") train.early_stop_patience = std::stoi(value);
        else if (key == "train.max_steps") train.max_steps = std::stol(value);
        else if (key == "sampler.n_steps") sampler.n_steps = std::stoi(value);
        else if (key == "sampler.t0") sampler.t0 = std::stod(value);
        else if (key == "sampler.snr") sampler.snr = std::stod(value);
        else if (key == "sampler.corrector_steps") sampler.corrector_steps = std::stoi(value);
        else if (key == "sampler.clamp_output") sampler.clamp_output = parse_bool(value);
        else if (key == "sampler.literal_paper_updates")
            sampler.literal_paper_updates = parse_bool(value);
        else if (key == "sampler.t_eps") sampler.t_eps = std::stod(value);
        else if (key == "seed") seed = std::stoull(value);
        else throw std::invalid_argument("config: unknown key: " + key);
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad value for " + key + ": " + value);
    }
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: missing '=' at " + path + ":" +
                                        std::to_string(lineno));
        apply_kv(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string RunConfig::serialize() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "geometry.detector = " << geometry.detector_h << "\n";
    ss << "geometry.n_views = " << geometry.n_views << "\n";
    ss << "geometry.pixel_size_mm = " << geometry.detector_pixel_size << "\n";
    ss << "model.channels = " << int_list_to_string(model_channels) << "\n";
    ss << "model.fourier_dim = " << fourier_dim << "\n";
    ss << "model.fourier_scale = " << fourier_scale << "\n";
    ss << "model.levels = " << int_list_to_string(model_levels) << "\n";
    ss << "phantom.bone_mu = " << phantom.bone_mu << "\n";
    ss << "phantom.bone_offset_max = " << phantom.bone_offset_max << "\n";
    ss << "phantom.bone_offset_min = " << phantom.bone_offset_min << "\n";
    ss << "phantom.bone_radius_max = " << phantom.bone_radius_max << "\n";
    ss << "phantom.bone_radius_min = " << phantom.bone_radius_min << "\n";
    ss << "phantom.bone_threshold = " << bone_threshold << "\n";
    ss << "phantom.grid = " << phantom.grid << "\n";
    ss << "phantom.leg_radius_max = " << phantom.leg_radius_max << "\n";
    ss << "phantom.leg_radius_min = " << phantom.leg_radius_min << "\n";
    ss << "phantom.n_bones = " << phantom.n_bones << "\n";
    ss << "phantom.n_phantoms = " << n_phantoms << "\n";
    ss << "phantom.soft_tissue_mu = " << phantom.soft_tissue_mu << "\n";
    ss << "phantom.spacing_mm = " << phantom.spacing_mm << "\n";
    ss << "sampler.clamp_output = " << (sampler.clamp_output ? "true" : "false") << "\n";
    ss << "sampler.corrector_steps = " << sampler.corrector_steps << "\n";
    ss << "sampler.literal_paper_updates = " << (sampler.literal_paper_updates ? "true" : "false")
       << "\n";
    ss << "sampler.n_steps = " << sampler.n_steps << "\n";
    ss << "sampler.snr = " << sampler.snr << "\n";
    ss << "sampler.t0 = " << sampler.t0 << "\n";
    ss << "sampler.t_eps = " << sampler.t_eps << "\n";
    ss << "schedule.sigma_max = " << sigma_max << "\n";
    ss << "schedule.sigma_min = " << sigma_min << "\n";
    ss << "seed = " << seed << "\n";
    ss << "train.batch_size = " << train.batch_size << "\n";
    ss << "train.checkpoint_every = " << train.checkpoint_every << "\n";
    ss << "train.early_stop_patience = " << train.early_stop_patience << "\n";
    ss << "train.learning_rate = " << train.learning_rate << "\n";
    ss << "train.loss_weighting = "
       << (train.loss_weighting == train::Weighting::SigmaSquared ? "sigma_squared" : "none")
       << "\n";
    ss << "train.max_epochs = " << train.max_epochs << "\n";
    ss << "train.max_steps = " << train.max_steps << "\n";
    ss << "train.t_eps = " << train.t_eps << "\n";
    return ss.str();
}

std::uint32_t RunConfig::hash() const {
    const std::string s = serialize();
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(s.data()),
                            static_cast<uInt>(s.size()));
    return static_cast<std::uint32_t>(crc);
}

void RunConfig::validate() const {
    schedule();  // throws on bad sigma bounds
    phantom.validate();
    geometry.validate();
    train.validate();
    sampler.validate();
    if (n_phantoms < 3) throw std::invalid_argument("config: phantom.n_phantoms must be >= 3");
    net::ScoreModelConfig mc = model_config(false, true);
    mc.validate();
    if (model_levels.front() != geometry.detector_h)
        throw std::invalid_argument("config: model.levels top must equal geometry.detector");
}

net::ScoreModelConfig RunConfig::model_config(bool conditional, bool noise_conditioned) const {
    net::ScoreModelConfig mc;
    mc.resolution_levels = model_levels;
    mc.channels_per_level = model_channels;
    mc.fourier_dim = fourier_dim;
    mc.fourier_scale = fourier_scale;
    mc.conditional = conditional;
    mc.noise_conditioned = noise_conditioned;
    mc.input_channels = conditional ? 2 : 1;
    return mc;
}

void write_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw DataError("write_config: cannot open " + path);
    f << cfg.serialize();
    if (!f) throw DataError("write_config: write failed for " + path);
}

}  // namespace xrgen::config
