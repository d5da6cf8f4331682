#pragma once

#include <vector>

namespace vad {

// Variance-preserving noise schedule on a linear log-SNR ramp.
//
// logsnr(t) is affine from logsnr_max at t=1 down to logsnr_min at t=T,
// alpha_bar[t] = sigmoid(logsnr(t)) is the signal fraction and
// sigma_bar[t] = sqrt(1 - alpha_bar[t]) the noise scale. The reverse-step
// coefficients are the standard ancestral posterior with the small variance:
//
//   x_{t-1} = recip_sqrt_alpha[t] * (x_t - eps_coef[t] * eps_hat) + step_sigma[t] * xi
//
// where alpha_t = alpha_bar[t]/alpha_bar[t-1], eps_coef[t] =
// (1-alpha_t)/sigma_bar[t] and step_sigma[t]^2 = (1-alpha_t) *
// (1-alpha_bar[t-1])/(1-alpha_bar[t]); step_sigma[1] = 0, so the last step
// is deterministic.
//
// All per-step arrays are indexed by t-1 for t in {1..T}. one_minus_alpha_bar
// is kept alongside alpha_bar because it is computed cancellation-free as
// sigmoid(-logsnr).
struct NoiseSchedule {
    int num_steps = 0;
    double logsnr_min = 0.0;
    double logsnr_max = 0.0;

    std::vector<double> logsnr;
    std::vector<double> alpha_bar;
    std::vector<double> one_minus_alpha_bar;
    std::vector<double> sigma_bar;

    std::vector<double> recip_sqrt_alpha;
    std::vector<double> eps_coef;
    std::vector<double> step_sigma;

    double alpha_bar_at(int t) const;            // t in {0..T}; t=0 -> 1
    double one_minus_alpha_bar_at(int t) const;  // t=0 -> 0
    double sigma_bar_at(int t) const;
    bool step_in_range(int t) const { return t >= 1 && t <= num_steps; }
};

NoiseSchedule make_schedule(int num_steps, double logsnr_min, double logsnr_max);

}  // namespace vad
