#include "vidadapt/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace vad {

namespace {
double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t == 0) return 1.0;
    return alpha_bar.at(static_cast<size_t>(t - 1));
}

double NoiseSchedule::one_minus_alpha_bar_at(int t) const {
    if (t == 0) return 0.0;
    return one_minus_alpha_bar.at(static_cast<size_t>(t - 1));
}

double NoiseSchedule::sigma_bar_at(int t) const {
    if (t == 0) return 0.0;
    return sigma_bar.at(static_cast<size_t>(t - 1));
}

NoiseSchedule make_schedule(int num_steps, double logsnr_min, double logsnr_max) {
    if (num_steps < 2) throw std::invalid_argument("make_schedule: num_steps must be >= 2");
    if (!(logsnr_min < logsnr_max))
        throw std::invalid_argument("make_schedule: logsnr_min must be < logsnr_max");

    NoiseSchedule s;
    s.num_steps = num_steps;
    s.logsnr_min = logsnr_min;
    s.logsnr_max = logsnr_max;
    s.logsnr.resize(num_steps);
    s.alpha_bar.resize(num_steps);
    s.one_minus_alpha_bar.resize(num_steps);
    s.sigma_bar.resize(num_steps);
    s.recip_sqrt_alpha.resize(num_steps);
    s.eps_coef.resize(num_steps);
    s.step_sigma.resize(num_steps);

    for (int t = 1; t <= num_steps; ++t) {
        double frac = static_cast<double>(t - 1) / static_cast<double>(num_steps - 1);
        double ls = logsnr_max + (logsnr_min - logsnr_max) * frac;
        s.logsnr[t - 1] = ls;
        s.alpha_bar[t - 1] = sigmoid(ls);
        s.one_minus_alpha_bar[t - 1] = sigmoid(-ls);
        s.sigma_bar[t - 1] = std::sqrt(s.one_minus_alpha_bar[t - 1]);
    }

    for (int t = 1; t <= num_steps; ++t) {
        double ab_prev = s.alpha_bar_at(t - 1);
        double om = s.one_minus_alpha_bar[t - 1];
        double om_prev = s.one_minus_alpha_bar_at(t - 1);
        // beta_t = 1 - ab/ab_prev, computed as a difference of the
        // one-minus values to avoid cancellation at high SNR.
        double beta = (om - om_prev) / ab_prev;
        double alpha = 1.0 - beta;
        s.recip_sqrt_alpha[t - 1] = 1.0 / std::sqrt(alpha);
        s.eps_coef[t - 1] = beta / s.sigma_bar[t - 1];
        s.step_sigma[t - 1] = std::sqrt(beta * om_prev / om);
        if (!std::isfinite(s.recip_sqrt_alpha[t - 1]) || !std::isfinite(s.eps_coef[t - 1]) ||
            !std::isfinite(s.step_sigma[t - 1]) || s.step_sigma[t - 1] < 0.0)
            throw std::invalid_argument("make_schedule: non-finite step coefficients");
    }
    return s;
}

}  // namespace vad
