#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xrgen/parallel.hpp"
#include "xrgen/rng.hpp"
#include "xrgen/sde.hpp"
#include "xrgen/tensor.hpp"

namespace xrgen::net {

struct ScoreModelConfig {
    std::vector<int> resolution_levels;  // descending; halving may floor at 1
    std::vector<int> channels_per_level;
    int fourier_dim = 64;
    double fourier_scale = 16.0;
    bool conditional = false;
    bool noise_conditioned = true;  // false -> U-Net baseline (no time embedding)
    int input_channels = 1;         // 2 when conditional (image ‖ condition)

    void validate() const;
    int top_resolution() const { return resolution_levels.front(); }
    bool operator==(const ScoreModelConfig&) const = default;
};

// Flat parameter array with a registered (name, offset, count) layout.
struct ParamStore {
    std::vector<double> values;
    struct Entry {
        std::string name;
        std::size_t offset = 0;
        std::size_t count = 0;
    };
    std::vector<Entry> entries;

    std::size_t add(const std::string& name, std::size_t count) {
        const std::size_t off = values.size();
        entries.push_back({name, off, count});
        values.resize(off + count, 0.0);
        return off;
    }
};

namespace layers {

struct Conv2d {
    int cin = 0, cout = 0, k = 3, stride = 1;
    std::size_t w_off = 0, b_off = 0;

    void init(ParamStore& ps, const std::string& name, Rng& rng, bool zero_init);
    ImageTensor forward(const ParamStore& ps, const ImageTensor& x, ExecMode mode) const;
    // returns dx; accumulates weight/bias grads into gbuf (same layout as ps.values)
    ImageTensor backward(const ParamStore& ps, const ImageTensor& x, const ImageTensor& dy,
                         std::vector<double>& gbuf, ExecMode mode) const;
};

struct GroupNorm {
    int ch = 0, groups = 1;
    std::size_t g_off = 0, b_off = 0;
    static constexpr double kEps = 1e-5;

    struct Saved {
        ImageTensor xhat;
        std::vector<double> inv_std;  // per group
    };

    void init(ParamStore& ps, const std::string& name, int channels);
    ImageTensor forward(const ParamStore& ps, const ImageTensor& x, Saved* saved) const;
    ImageTensor backward(const ParamStore& ps, const Saved& saved, const ImageTensor& dy,
                         std::vector<double>& gbuf) const;
};

struct Linear {
    int in = 0, out = 0;
    std::size_t w_off = 0, b_off = 0;

    void init(ParamStore& ps, const std::string& name, Rng& rng);
    std::vector<double> forward(const ParamStore& ps, const std::vector<double>& x) const;
    std::vector<double> backward(const ParamStore& ps, const std::vector<double>& x,
                                 const std::vector<double>& dy, std::vector<double>& gbuf) const;
};

// Residual block: norm-silu-conv (+ time projection) - norm-silu-conv, with a
// 1x1 projection on the shortcut when the channel count changes.
struct ResBlock {
    int cin = 0, cout = 0;
    bool time_cond = true;
    GroupNorm n1, n2;
    Conv2d c1, c2;
    Linear emb_proj;
    Conv2d skip;
    bool has_skip = false;

    struct Ctx {
        ImageTensor x_in;
        GroupNorm::Saved n1s, n2s;
        ImageTensor t1, t1s;  // n1 output (silu input), silu output (c1 input)
        ImageTensor t2, t2s;
    };

    void init(ParamStore& ps, const std::string& name, int cin_, int cout_, int emb_dim,
              bool time_cond_, Rng& rng);
    ImageTensor forward(const ParamStore& ps, const ImageTensor& x, const std::vector<double>& emb,
                        Ctx& ctx, ExecMode mode) const;
    // returns dx; accumulates param grads into gbuf and time-embedding grads into demb
    ImageTensor backward(const ParamStore& ps, const Ctx& ctx, const std::vector<double>& emb,
                         const ImageTensor& dy, std::vector<double>& gbuf,
                         std::vector<double>& demb, ExecMode mode) const;
};

}  // namespace layers

// Noise-conditional score network (encoder-decoder with skip connections and
// additive time embedding in every residual block), also usable as the
// noise-module-free U-Net baseline when noise_conditioned is false.
class ScoreModel {
  public:
    ScoreModel() = default;
    ScoreModel(ScoreModelConfig cfg, std::uint64_t init_seed);

    const ScoreModelConfig& config() const { return cfg_; }
    ParamStore& params() { return ps_; }
    const ParamStore& params() const { return ps_; }
    const std::vector<double>& fourier_frequencies() const { return freqs_; }
    std::size_t parameter_count() const { return ps_.values.size(); }

    // [sin(2*pi*f_i*u), cos(2*pi*f_i*u)] with u = ln(sigma_t); length 2*fourier_dim.
    std::vector<double> fourier_embed(const sde::SigmaSchedule& sched, double t) const;

    struct Workspace;  // defined in the source; obtain via make_workspace()

    // Raw network output before the 1/sigma scaling or the [0,1] clamp.
    ImageTensor raw_forward(const ImageTensor& x, const ImageTensor* cond,
                            std::optional<double> u, Workspace& ws, ExecMode mode) const;
    // Accumulates parameter gradients into gbuf for the stored forward pass.
    void backward(const ImageTensor& draw, Workspace& ws, std::vector<double>& gbuf,
                  ExecMode mode) const;

    // Estimated score s_theta(x_t, [y], t): raw output scaled by 1/sigma_t.
    ImageTensor score_forward(const sde::SigmaSchedule& sched, const ImageTensor& xt,
                              const ImageTensor* cond, double t,
                              ExecMode mode = exec_mode()) const;
    // Baseline U-Net: condition -> radiograph in one pass, clamped to [0,1].
    ImageTensor unet_forward(const ImageTensor& cond, ExecMode mode = exec_mode()) const;

    std::unique_ptr<Workspace> make_workspace() const;
    ~ScoreModel();
    ScoreModel(ScoreModel&&) noexcept;
    ScoreModel& operator=(ScoreModel&&) noexcept;
    ScoreModel(const ScoreModel&);
    ScoreModel& operator=(const ScoreModel&);

  private:
    friend ScoreModel load_model(const std::string& path);
    void build_layers(Rng& param_rng);

    ScoreModelConfig cfg_;
    ParamStore ps_;
    std::vector<double> freqs_;

    layers::Conv2d stem_;
    std::vector<layers::ResBlock> enc_;
    std::vector<layers::Conv2d> down_;
    layers::ResBlock mid_;
    std::vector<layers::Conv2d> up_;        // index i operates between level i+1 and i
    std::vector<layers::ResBlock> dec_;
    std::vector<int> factor_;               // upsample factor per decoder stage
    layers::GroupNorm head_norm_;
    layers::Conv2d head_conv_;
    layers::Linear emb0_, emb1_;
};

// Per-pass activation storage for the backward sweep. Reusable across calls.
struct ScoreModel::Workspace {
    ImageTensor x_in;
    std::vector<layers::ResBlock::Ctx> enc, dec;
    layers::ResBlock::Ctx mid;
    std::vector<ImageTensor> ups;    // input to the post-upsample conv, per decoder stage
    std::vector<ImageTensor> skips;  // encoder outputs feeding the skip connections
    layers::GroupNorm::Saved head_ns;
    ImageTensor head_t, head_ts;
    std::vector<double> four, e0, e0s, emb;
    bool has_time = false;
};

// Model file: little-endian binary, magic "SDF1", version u32, config block,
// frequency block, parameter block, trailing CRC32.
inline constexpr std::uint32_t kModelFormatVersion = 1;
void save_model(const ScoreModel& model, const std::string& path);
ScoreModel load_model(const std::string& path);

}  // namespace xrgen::net
