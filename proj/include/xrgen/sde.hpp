#pragma once

#include "xrgen/rng.hpp"
#include "xrgen/tensor.hpp"

namespace xrgen::sde {

// Variance-exploding noise schedule: sigma(t) = sigma_min * (sigma_max/sigma_min)^t
// on t in [0,1], strictly increasing, with exact endpoint values.
class SigmaSchedule {
  public:
    SigmaSchedule(double sigma_min, double sigma_max);

    double sigma_min() const { return sigma_min_; }
    double sigma_max() const { return sigma_max_; }
    double log_ratio() const { return log_ratio_; }  // ln(sigma_max/sigma_min)

    // Throws std::domain_error for t outside [0,1]. t=0 is admitted for
    // schedule queries even though perturbed states live on (0,1].
    double sigma(double t) const;

    // Drift is identically zero for the VE SDE; diffusion g(t) = sigma(t)*sqrt(2*ln(max/min)).
    double drift(double /*t*/) const { return 0.0; }
    double diffusion(double t) const;

  private:
    double sigma_min_;
    double sigma_max_;
    double log_min_;
    double log_ratio_;
};

// x_t = x0 + sigma(t) * noise; the VE perturbation kernel x_t|x_0 ~ N(x_0, sigma_t^2 I).
ImageTensor perturb(const ImageTensor& x0, const SigmaSchedule& sched, double t,
                    const ImageTensor& noise);

// Exact score of the Gaussian kernel: (x0 - xt) / sigma_t^2. Rejects t outside (0,1].
ImageTensor kernel_score(const ImageTensor& xt, const ImageTensor& x0, const SigmaSchedule& sched,
                         double t);

// i.i.d. N(0, sigma_max^2) tensor of the given shape.
ImageTensor prior_sample(int height, int width, int channels, const SigmaSchedule& sched, Rng& rng);

}  // namespace xrgen::sde
