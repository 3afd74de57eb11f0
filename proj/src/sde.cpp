#include "xrgen/sde.hpp"

#include <cmath>
#include <stdexcept>

namespace xrgen::sde {

SigmaSchedule::SigmaSchedule(double sigma_min, double sigma_max)
    : sigma_min_(sigma_min), sigma_max_(sigma_max) {
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
        throw std::invalid_argument("SigmaSchedule: requires 0 < sigma_min < sigma_max");
    log_min_ = std::log(sigma_min_);
    log_ratio_ = std::log(sigma_max_ / sigma_min_);
}

double SigmaSchedule::sigma(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("SigmaSchedule::sigma: t outside [0,1]");
    if (t == 0.0) return sigma_min_;
    if (t == 1.0) return sigma_max_;
    return std::exp(log_min_ + t * log_ratio_);
}

double SigmaSchedule::diffusion(double t) const { return sigma(t) * std::sqrt(2.0 * log_ratio_); }

ImageTensor perturb(const ImageTensor& x0, const SigmaSchedule& sched, double t,
                    const ImageTensor& noise) {
    check_same_shape(x0, noise, "perturb");
    const double s = sched.sigma(t);
    ImageTensor out = x0;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += s * noise.values[i];
    return out;
}

ImageTensor kernel_score(const ImageTensor& xt, const ImageTensor& x0, const SigmaSchedule& sched,
                         double t) {
    check_same_shape(xt, x0, "kernel_score");
    if (!(t > 0.0 && t <= 1.0)) throw std::domain_error("kernel_score: t outside (0,1]");
    const double s = sched.sigma(t);
    const double inv_var = 1.0 / (s * s);
    ImageTensor out(xt.height, xt.width, xt.channels);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] = (x0.values[i] - xt.values[i]) * inv_var;
    return out;
}

ImageTensor prior_sample(int height, int width, int channels, const SigmaSchedule& sched,
                         Rng& rng) {
    ImageTensor out(height, width, channels);
    const double s = sched.sigma_max();
    for (double& v : out.values) v = s * rng.normal();
    return out;
}

}  // namespace xrgen::sde
