#include "xrgen/scorenet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <zlib.h>

#include "xrgen/errors.hpp"
#include "xrgen/kernels.hpp"

namespace xrgen::net {

namespace {

inline bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline double silu(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return x * s;
}
inline double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

ImageTensor silu_tensor(const ImageTensor& x) {
    ImageTensor y = x;
    for (double& v : y.values) v = silu(v);
    return y;
}

ImageTensor silu_backward_tensor(const ImageTensor& x, const ImageTensor& dy) {
    ImageTensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.values[i] *= silu_grad(x.values[i]);
    return dx;
}

std::vector<double> silu_vec(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = silu(x[i]);
    return y;
}

std::vector<double> silu_backward_vec(const std::vector<double>& x,
                                      const std::vector<double>& dy) {
    std::vector<double> dx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * silu_grad(x[i]);
    return dx;
}

void add_inplace(ImageTensor& a, const ImageTensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.values[i] += b.values[i];
}

int norm_groups(int channels) {
    for (int g = std::min(8, channels); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

}  // namespace

void ScoreModelConfig::validate() const {
    const std::size_t L = resolution_levels.size();
    if (L < 2 || channels_per_level.size() != L)
        throw std::invalid_argument("ScoreModelConfig: need >= 2 levels with matching channel list");
    for (std::size_t i = 0; i < L; ++i) {
        if (!power_of_two(resolution_levels[i]))
            throw std::invalid_argument("ScoreModelConfig: resolutions must be powers of two");
        if (channels_per_level[i] < 1)
            throw std::invalid_argument("ScoreModelConfig: channel counts must be positive");
    }
    for (std::size_t i = 0; i + 1 < L; ++i) {
        const int a = resolution_levels[i], b = resolution_levels[i + 1];
        if (!(b == a / 2 || (a == 1 && b == 1)))
            throw std::invalid_argument(
                "ScoreModelConfig: resolutions must halve between levels (flooring at 1)");
    }
    if (fourier_dim < 1) throw std::invalid_argument("ScoreModelConfig: fourier_dim must be >= 1");
    if (conditional && input_channels != 2)
        throw std::invalid_argument("ScoreModelConfig: conditional models take 2 input channels");
    if (!conditional && input_channels != 1)
        throw std::invalid_argument("ScoreModelConfig: unconditional models take 1 input channel");
}

namespace layers {

// ---- Conv2d ----

void Conv2d::init(ParamStore& ps, const std::string& name, Rng& rng, bool zero_init) {
    const std::size_t nw = static_cast<std::size_t>(cout) * cin * k * k;
    w_off = ps.add(name + ".w", nw);
    b_off = ps.add(name + ".b", static_cast<std::size_t>(cout));
    if (!zero_init) {
        const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
        for (std::size_t i = 0; i < nw; ++i) ps.values[w_off + i] = std * rng.normal();
    }
}

ImageTensor Conv2d::forward(const ParamStore& ps, const ImageTensor& x, ExecMode mode) const {
    const int oh = kernels::conv_out_size(x.height, stride);
    const int ow = kernels::conv_out_size(x.width, stride);
    ImageTensor y(oh, ow, cout);
    kernels::conv2d_forward(x.values.data(), cin, x.height, x.width, ps.values.data() + w_off,
                            ps.values.data() + b_off, cout, k, stride, y.values.data(), mode);
    return y;
}

ImageTensor Conv2d::backward(const ParamStore& ps, const ImageTensor& x, const ImageTensor& dy,
                             std::vector<double>& gbuf, ExecMode mode) const {
    ImageTensor dx(x.height, x.width, cin);
    kernels::conv2d_backward_input(dy.values.data(), cout, ps.values.data() + w_off, cin, x.height,
                                   x.width, k, stride, dx.values.data(), mode);
    kernels::conv2d_backward_params(x.values.data(), cin, x.height, x.width, dy.values.data(),
                                    cout, k, stride, gbuf.data() + w_off, gbuf.data() + b_off,
                                    mode);
    return dx;
}

// ---- GroupNorm ----

void GroupNorm::init(ParamStore& ps, const std::string& name, int channels) {
    ch = channels;
    groups = norm_groups(channels);
    g_off = ps.add(name + ".gamma", static_cast<std::size_t>(ch));
    b_off = ps.add(name + ".beta", static_cast<std::size_t>(ch));
    for (int c = 0; c < ch; ++c) ps.values[g_off + c] = 1.0;
}

ImageTensor GroupNorm::forward(const ParamStore& ps, const ImageTensor& x, Saved* saved) const {
    const int px = x.height * x.width;
    const int cpg = ch / groups;
    ImageTensor y(x.height, x.width, ch);
    if (saved) {
        saved->xhat = ImageTensor(x.height, x.width, ch);
        saved->inv_std.assign(static_cast<std::size_t>(groups), 0.0);
    }
    for (int g = 0; g < groups; ++g) {
        const std::size_t n = static_cast<std::size_t>(cpg) * px;
        double mean = 0.0;
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
            const double* xp = x.plane(c);
            for (int i = 0; i < px; ++i) mean += xp[i];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
            const double* xp = x.plane(c);
            for (int i = 0; i < px; ++i) {
                const double d = xp[i] - mean;
                var += d * d;
            }
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kEps);
        if (saved) saved->inv_std[g] = inv;
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
            const double* xp = x.plane(c);
            double* yp = y.plane(c);
            double* hp = saved ? saved->xhat.plane(c) : nullptr;
            const double gamma = ps.values[g_off + c];
            const double beta = ps.values[b_off + c];
            for (int i = 0; i < px; ++i) {
                const double xh = (xp[i] - mean) * inv;
                if (hp) hp[i] = xh;
                yp[i] = gamma * xh + beta;
            }
        }
    }
    return y;
}

ImageTensor GroupNorm::backward(const ParamStore& ps, const Saved& saved, const ImageTensor& dy,
                                std::vector<double>& gbuf) const {
    const int px = dy.height * dy.width;
    const int cpg = ch / groups;
    ImageTensor dx(dy.height, dy.width, ch);
    for (int g = 0; g < groups; ++g) {
        const double n = static_cast<double>(cpg) * px;
        double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat) over the group
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
            const double gamma = ps.values[g_off + c];
            const double* dp = dy.plane(c);
            const double* hp = saved.xhat.plane(c);
            for (int i = 0; i < px; ++i) {
                const double dxh = dp[i] * gamma;
                m1 += dxh;
                m2 += dxh * hp[i];
            }
        }
        m1 /= n;
        m2 /= n;
        const double inv = saved.inv_std[g];
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
            const double gamma = ps.values[g_off + c];
            const double* dp = dy.plane(c);
            const double* hp = saved.xhat.plane(c);
            double* dxp = dx.plane(c);
            double dgamma = 0.0, dbeta = 0.0;
            for (int i = 0; i < px; ++i) {
                dgamma += dp[i] * hp[i];
                dbeta += dp[i];
                dxp[i] = inv * (dp[i] * gamma - m1 - hp[i] * m2);
            }
            gbuf[g_off + c] += dgamma;
            gbuf[b_off + c] += dbeta;
        }
    }
    return dx;
}

// ---- Linear ----

void Linear::init(ParamStore& ps, const std::string& name, Rng& rng) {
    w_off = ps.add(name + ".w", static_cast<std::size_t>(out) * in);
    b_off = ps.add(name + ".b", static_cast<std::size_t>(out));
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(out) * in; ++i)
        ps.values[w_off + i] = std * rng.normal();
}

std::vector<double> Linear::forward(const ParamStore& ps, const std::vector<double>& x) const {
    std::vector<double> y(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        double acc = ps.values[b_off + o];
        const double* w = ps.values.data() + w_off + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += w[i] * x[i];
        y[o] = acc;
    }
    return y;
}

std::vector<double> Linear::backward(const ParamStore& ps, const std::vector<double>& x,
                                     const std::vector<double>& dy,
                                     std::vector<double>& gbuf) const {
    std::vector<double> dx(static_cast<std::size_t>(in), 0.0);
    for (int o = 0; o < out; ++o) {
        const double g = dy[o];
        gbuf[b_off + o] += g;
        const double* w = ps.values.data() + w_off + static_cast<std::size_t>(o) * in;
        double* dw = gbuf.data() + w_off + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
            dw[i] += g * x[i];
            dx[i] += g * w[i];
        }
    }
    return dx;
}

// ---- ResBlock ----

void ResBlock::init(ParamStore& ps, const std::string& name, int cin_, int cout_, int emb_dim,
                    bool time_cond_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    time_cond = time_cond_;
    n1.init(ps, name + ".n1", cin);
    c1 = {cin, cout, 3, 1};
    c1.init(ps, name + ".c1", rng, false);
    if (time_cond) {
        emb_proj = {emb_dim, cout};
        emb_proj.init(ps, name + ".emb", rng);
    }
    n2.init(ps, name + ".n2", cout);
    c2 = {cout, cout, 3, 1};
    c2.init(ps, name + ".c2", rng, false);
    has_skip = cin != cout;
    if (has_skip) {
        skip = {cin, cout, 1, 1};
        skip.init(ps, name + ".skip", rng, false);
    }
}

ImageTensor ResBlock::forward(const ParamStore& ps, const ImageTensor& x,
                              const std::vector<double>& emb, Ctx& ctx, ExecMode mode) const {
    ctx.x_in = x;
    ctx.t1 = n1.forward(ps, x, &ctx.n1s);
    ctx.t1s = silu_tensor(ctx.t1);
    ImageTensor h = c1.forward(ps, ctx.t1s, mode);
    if (time_cond) {
        const std::vector<double> pe = emb_proj.forward(ps, emb);
        const int px = h.height * h.width;
        for (int c = 0; c < cout; ++c) {
            double* hp = h.plane(c);
            for (int i = 0; i < px; ++i) hp[i] += pe[c];
        }
    }
    ctx.t2 = n2.forward(ps, h, &ctx.n2s);
    ctx.t2s = silu_tensor(ctx.t2);
    ImageTensor out = c2.forward(ps, ctx.t2s, mode);
    if (has_skip)
        add_inplace(out, skip.forward(ps, x, mode));
    else
        add_inplace(out, x);
    return out;
}

ImageTensor ResBlock::backward(const ParamStore& ps, const Ctx& ctx,
                               const std::vector<double>& emb, const ImageTensor& dy,
                               std::vector<double>& gbuf, std::vector<double>& demb,
                               ExecMode mode) const {
    ImageTensor d_t2s = c2.backward(ps, ctx.t2s, dy, gbuf, mode);
    ImageTensor d_t2 = silu_backward_tensor(ctx.t2, d_t2s);
    ImageTensor d_h = n2.backward(ps, ctx.n2s, d_t2, gbuf);
    if (time_cond) {
        std::vector<double> dpe(static_cast<std::size_t>(cout), 0.0);
        const int px = d_h.height * d_h.width;
        for (int c = 0; c < cout; ++c) {
            const double* dp = d_h.plane(c);
            double acc = 0.0;
            for (int i = 0; i < px; ++i) acc += dp[i];
            dpe[c] = acc;
        }
        const std::vector<double> de = emb_proj.backward(ps, emb, dpe, gbuf);
        for (std::size_t i = 0; i < de.size(); ++i) demb[i] += de[i];
    }
    ImageTensor d_t1s = c1.backward(ps, ctx.t1s, d_h, gbuf, mode);
    ImageTensor d_t1 = silu_backward_tensor(ctx.t1, d_t1s);
    ImageTensor dx = n1.backward(ps, ctx.n1s, d_t1, gbuf);
    if (has_skip)
        add_inplace(dx, skip.backward(ps, ctx.x_in, dy, gbuf, mode));
    else
        add_inplace(dx, dy);
    return dx;
}

}  // namespace layers

// ---- ScoreModel ----

ScoreModel::~ScoreModel() = default;
ScoreModel::ScoreModel(ScoreModel&&) noexcept = default;
ScoreModel& ScoreModel::operator=(ScoreModel&&) noexcept = default;
ScoreModel::ScoreModel(const ScoreModel&) = default;
ScoreModel& ScoreModel::operator=(const ScoreModel&) = default;

ScoreModel::ScoreModel(ScoreModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng freq_rng(derive_seed(init_seed, 101));
    freqs_.resize(static_cast<std::size_t>(cfg_.fourier_dim));
    for (double& f : freqs_) f = cfg_.fourier_scale * freq_rng.normal();
    Rng param_rng(derive_seed(init_seed, 202));
    build_layers(param_rng);
}

void ScoreModel::build_layers(Rng& rng) {
    const auto& lv = cfg_.resolution_levels;
    const auto& ch = cfg_.channels_per_level;
    const int L = static_cast<int>(lv.size());
    const int E = 2 * cfg_.fourier_dim;

    if (cfg_.noise_conditioned) {
        emb0_ = {E, E};
        emb0_.init(ps_, "time.mlp0", rng);
        emb1_ = {E, E};
        emb1_.init(ps_, "time.mlp1", rng);
    }
    stem_ = {cfg_.input_channels, ch[0], 3, 1};
    stem_.init(ps_, "stem", rng, false);

    enc_.resize(L);
    down_.resize(L - 1);
    for (int i = 0; i < L; ++i) {
        enc_[i].init(ps_, "enc" + std::to_string(i), ch[i], ch[i], E, cfg_.noise_conditioned, rng);
        if (i < L - 1) {
            const int stride = lv[i] == lv[i + 1] ? 1 : 2;
            down_[i] = {ch[i], ch[i + 1], 3, stride};
            down_[i].init(ps_, "down" + std::to_string(i), rng, false);
        }
    }
    mid_.init(ps_, "mid", ch[L - 1], ch[L - 1], E, cfg_.noise_conditioned, rng);

    up_.resize(L - 1);
    dec_.resize(L - 1);
    factor_.resize(L - 1);
    for (int i = L - 2; i >= 0; --i) {
        factor_[i] = lv[i] / lv[i + 1];
        up_[i] = {ch[i + 1], ch[i], 3, 1};
        up_[i].init(ps_, "up" + std::to_string(i), rng, false);
        dec_[i].init(ps_, "dec" + std::to_string(i), 2 * ch[i], ch[i], E, cfg_.noise_conditioned,
                     rng);
    }
    head_norm_.init(ps_, "head.norm", ch[0]);
    head_conv_ = {ch[0], 1, 3, 1};
    head_conv_.init(ps_, "head.conv", rng, /*zero_init=*/true);
}

std::vector<double> ScoreModel::fourier_embed(const sde::SigmaSchedule& sched, double t) const {
    const double u = std::log(sched.sigma(t));
    std::vector<double> out(2 * freqs_.size());
    for (std::size_t i = 0; i < freqs_.size(); ++i) {
        const double a = 2.0 * M_PI * freqs_[i] * u;
        out[i] = std::sin(a);
        out[freqs_.size() + i] = std::cos(a);
    }
    return out;
}

std::unique_ptr<ScoreModel::Workspace> ScoreModel::make_workspace() const {
    return std::make_unique<Workspace>();
}

ImageTensor ScoreModel::raw_forward(const ImageTensor& x, const ImageTensor* cond,
                                    std::optional<double> u, Workspace& ws, ExecMode mode) const {
    ImageTensor input = cond ? concat_channels(x, *cond) : x;
    if (input.channels != cfg_.input_channels)
        throw std::invalid_argument("ScoreModel: input channel count does not match config");
    if (input.height != cfg_.top_resolution() || input.width != cfg_.top_resolution())
        throw std::invalid_argument("ScoreModel: input resolution does not match config");
    if (u.has_value() != cfg_.noise_conditioned)
        throw std::invalid_argument("ScoreModel: time conditioning mismatch");

    const int L = static_cast<int>(cfg_.resolution_levels.size());
    ws.has_time = u.has_value();
    if (ws.has_time) {
        const std::size_t F = freqs_.size();
        ws.four.resize(2 * F);
        for (std::size_t i = 0; i < F; ++i) {
            const double a = 2.0 * M_PI * freqs_[i] * *u;
            ws.four[i] = std::sin(a);
            ws.four[F + i] = std::cos(a);
        }
        ws.e0 = emb0_.forward(ps_, ws.four);
        ws.e0s = silu_vec(ws.e0);
        ws.emb = emb1_.forward(ps_, ws.e0s);
    } else {
        ws.emb.clear();
    }

    ws.x_in = std::move(input);
    ws.enc.resize(L);
    ws.dec.resize(L - 1);
    ws.ups.resize(L - 1);
    ws.skips.resize(L - 1);

    ImageTensor h = stem_.forward(ps_, ws.x_in, mode);
    for (int i = 0; i < L; ++i) {
        h = enc_[i].forward(ps_, h, ws.emb, ws.enc[i], mode);
        if (i < L - 1) {
            ws.skips[i] = h;
            h = down_[i].forward(ps_, ws.skips[i], mode);
        }
    }
    h = mid_.forward(ps_, h, ws.emb, ws.mid, mode);
    for (int i = L - 2; i >= 0; --i) {
        if (factor_[i] == 1) {
            ws.ups[i] = h;
        } else {
            ImageTensor up(h.height * factor_[i], h.width * factor_[i], h.channels);
            kernels::upsample_nearest(h.values.data(), h.channels, h.height, h.width, factor_[i],
                                      up.values.data());
            ws.ups[i] = std::move(up);
        }
        ImageTensor uo = up_[i].forward(ps_, ws.ups[i], mode);
        ImageTensor cat = concat_channels(uo, ws.skips[i]);
        h = dec_[i].forward(ps_, cat, ws.emb, ws.dec[i], mode);
    }
    ws.head_t = head_norm_.forward(ps_, h, &ws.head_ns);
    ws.head_ts = silu_tensor(ws.head_t);
    return head_conv_.forward(ps_, ws.head_ts, mode);
}

void ScoreModel::backward(const ImageTensor& draw, Workspace& ws, std::vector<double>& gbuf,
                          ExecMode mode) const {
    const int L = static_cast<int>(cfg_.resolution_levels.size());
    const int E = 2 * cfg_.fourier_dim;
    std::vector<double> demb(ws.has_time ? static_cast<std::size_t>(E) : 0, 0.0);

    ImageTensor dh = head_conv_.backward(ps_, ws.head_ts, draw, gbuf, mode);
    dh = silu_backward_tensor(ws.head_t, dh);
    dh = head_norm_.backward(ps_, ws.head_ns, dh, gbuf);

    std::vector<ImageTensor> dskips(L - 1);
    for (int i = 0; i < L - 1; ++i) {
        ImageTensor dcat = dec_[i].backward(ps_, ws.dec[i], ws.emb, dh, gbuf, demb, mode);
        const int chn = dec_[i].cout;
        ImageTensor du(dcat.height, dcat.width, chn);
        ImageTensor dskip(dcat.height, dcat.width, chn);
        std::copy(dcat.values.begin(), dcat.values.begin() + du.size(), du.values.begin());
        std::copy(dcat.values.begin() + du.size(), dcat.values.end(), dskip.values.begin());
        dskips[i] = std::move(dskip);
        ImageTensor dus = up_[i].backward(ps_, ws.ups[i], du, gbuf, mode);
        if (factor_[i] == 1) {
            dh = std::move(dus);
        } else {
            ImageTensor dd(dus.height / factor_[i], dus.width / factor_[i], dus.channels);
            kernels::upsample_nearest_backward(dus.values.data(), dus.channels, dd.height,
                                               dd.width, factor_[i], dd.values.data());
            dh = std::move(dd);
        }
    }
    dh = mid_.backward(ps_, ws.mid, ws.emb, dh, gbuf, demb, mode);
    dh = enc_[L - 1].backward(ps_, ws.enc[L - 1], ws.emb, dh, gbuf, demb, mode);
    for (int i = L - 2; i >= 0; --i) {
        dh = down_[i].backward(ps_, ws.skips[i], dh, gbuf, mode);
        add_inplace(dh, dskips[i]);
        dh = enc_[i].backward(ps_, ws.enc[i], ws.emb, dh, gbuf, demb, mode);
    }
    stem_.backward(ps_, ws.x_in, dh, gbuf, mode);

    if (ws.has_time) {
        const std::vector<double> de0s = emb1_.backward(ps_, ws.e0s, demb, gbuf);
        const std::vector<double> de0 = silu_backward_vec(ws.e0, de0s);
        emb0_.backward(ps_, ws.four, de0, gbuf);  // frequencies themselves are frozen
    }
}

ImageTensor ScoreModel::score_forward(const sde::SigmaSchedule& sched, const ImageTensor& xt,
                                      const ImageTensor* cond, double t, ExecMode mode) const {
    if (!cfg_.noise_conditioned)
        throw std::invalid_argument("score_forward: model is the noise-free U-Net baseline");
    if (cfg_.conditional != (cond != nullptr))
        throw std::invalid_argument("score_forward: condition presence must match model.conditional");
    if (cond) check_same_shape(xt, *cond, "score_forward");
    const double sigma = sched.sigma(t);
    Workspace ws;
    ImageTensor raw = raw_forward(xt, cond, std::log(sigma), ws, mode);
    const double inv = 1.0 / sigma;
    for (double& v : raw.values) v *= inv;
    return raw;
}

ImageTensor ScoreModel::unet_forward(const ImageTensor& cond, ExecMode mode) const {
    if (cfg_.noise_conditioned)
        throw std::invalid_argument("unet_forward: model is noise-conditioned");
    Workspace ws;
    ImageTensor out = raw_forward(cond, nullptr, std::nullopt, ws, mode);
    for (double& v : out.values) v = std::min(1.0, std::max(0.0, v));
    return out;
}

// ---- serialization ----

namespace {

void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n);
}
void put_u8(std::string& buf, std::uint8_t v) { put_bytes(buf, &v, 1); }
void put_u32(std::string& buf, std::uint32_t v) { put_bytes(buf, &v, 4); }
void put_i32(std::string& buf, std::int32_t v) { put_bytes(buf, &v, 4); }
void put_u64(std::string& buf, std::uint64_t v) { put_bytes(buf, &v, 8); }
void put_f64(std::string& buf, double v) { put_bytes(buf, &v, 8); }

struct Cursor {
    const unsigned char* p;
    std::size_t n, pos = 0;
    void need(std::size_t k) const {
        if (pos + k > n) throw DataError("model file: truncated");
    }
    std::uint8_t u8() {
        need(1);
        return p[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, p + pos, 4);
        pos += 4;
        return v;
    }
    std::int32_t i32() {
        need(4);
        std::int32_t v;
        std::memcpy(&v, p + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, p + pos, 8);
        pos += 8;
        return v;
    }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, p + pos, 8);
        pos += 8;
        return v;
    }
};

}  // namespace

void save_model(const ScoreModel& model, const std::string& path) {
    const ScoreModelConfig& cfg = model.config();
    std::string buf;
    buf.append("SDF1", 4);
    put_u32(buf, kModelFormatVersion);
    put_u32(buf, static_cast<std::uint32_t>(cfg.resolution_levels.size()));
    for (int v : cfg.resolution_levels) put_i32(buf, v);
    for (int v : cfg.channels_per_level) put_i32(buf, v);
    put_i32(buf, cfg.fourier_dim);
    put_f64(buf, cfg.fourier_scale);
    put_u8(buf, cfg.conditional ? 1 : 0);
    put_u8(buf, cfg.noise_conditioned ? 1 : 0);
    put_i32(buf, cfg.input_channels);
    put_u64(buf, model.fourier_frequencies().size());
    for (double f : model.fourier_frequencies()) put_f64(buf, f);
    put_u64(buf, model.params().values.size());
    for (double v : model.params().values) put_f64(buf, v);

    const uLong crc = crc32(crc32(0L, Z_NULL, 0),
                            reinterpret_cast<const Bytef*>(buf.data()),
                            static_cast<uInt>(buf.size()));
    put_u32(buf, static_cast<std::uint32_t>(crc));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_model: cannot open " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("save_model: write failed for " + path);
}

ScoreModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_model: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw DataError("model file: truncated");
    if (buf.compare(0, 4, "SDF1") != 0) throw DataError("model file: bad magic (not an SDF1 file)");

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(buf.data()),
                            static_cast<uInt>(buf.size() - 4));
    if (static_cast<std::uint32_t>(crc) != stored_crc)
        throw DataError("model file: checksum mismatch (corrupt file)");

    Cursor c{reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4, 4};
    const std::uint32_t version = c.u32();
    if (version != kModelFormatVersion)
        throw DataError("model file: format version " + std::to_string(version) +
                        " unsupported, expected " + std::to_string(kModelFormatVersion));
    ScoreModelConfig cfg;
    const std::uint32_t L = c.u32();
    if (L < 2 || L > 16) throw DataError("model file: implausible level count");
    cfg.resolution_levels.resize(L);
    cfg.channels_per_level.resize(L);
    for (auto& v : cfg.resolution_levels) v = c.i32();
    for (auto& v : cfg.channels_per_level) v = c.i32();
    cfg.fourier_dim = c.i32();
    cfg.fourier_scale = c.f64();
    cfg.conditional = c.u8() != 0;
    cfg.noise_conditioned = c.u8() != 0;
    cfg.input_channels = c.i32();

    ScoreModel model(cfg, 0);
    const std::uint64_t nf = c.u64();
    if (nf != model.fourier_frequencies().size())
        throw DataError("model file: frequency block size mismatch");
    std::vector<double> freqs(nf);
    for (auto& v : freqs) v = c.f64();
    const std::uint64_t np = c.u64();
    if (np != model.params().values.size())
        throw DataError("model file: parameter block size mismatch");
    std::vector<double> params(np);
    for (auto& v : params) v = c.f64();
    if (c.pos != c.n) throw DataError("model file: trailing bytes");

    // overwrite the seed-0 initialization with the stored state
    model.ps_.values = std::move(params);
    model.freqs_ = std::move(freqs);
    return model;
}

}  // namespace xrgen::net
