#include "vidadapt/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace vad {

NoisySample forward_noise(const VideoTensor& tau, int t, std::span<const float> eps,
                          const NoiseSchedule& sched) {
    if (!sched.step_in_range(t)) throw std::invalid_argument("forward_noise: step out of range");
    if (eps.size() != tau.data.size())
        throw std::invalid_argument("forward_noise: eps shape mismatch");
    float signal = static_cast<float>(std::sqrt(sched.alpha_bar_at(t)));
    float noise = static_cast<float>(sched.sigma_bar_at(t));
    NoisySample out;
    out.step = t;
    out.tensor.shape = tau.shape;
    out.tensor.data.resize(tau.data.size());
    for (size_t i = 0; i < tau.data.size(); ++i)
        out.tensor.data[i] = signal * tau.data[i] + noise * eps[i];
    return out;
}

NoisySample ddpm_step(const NoisySample& sample, std::span<const float> eps_pred,
                      const NoiseSchedule& sched, RngStream& rng, bool deterministic) {
    int t = sample.step;
    if (t < 1) throw std::invalid_argument("ddpm_step: step must be >= 1");
    if (t > sched.num_steps) throw std::invalid_argument("ddpm_step: step out of range");
    if (eps_pred.size() != sample.tensor.data.size())
        throw std::invalid_argument("ddpm_step: eps_pred shape mismatch");

    float scale = static_cast<float>(sched.recip_sqrt_alpha[t - 1]);
    float ecoef = static_cast<float>(sched.eps_coef[t - 1]);
    float sigma = static_cast<float>(sched.step_sigma[t - 1]);

    NoisySample out;
    out.step = t - 1;
    out.tensor.shape = sample.tensor.shape;
    out.tensor.data.resize(sample.tensor.data.size());
    bool add_noise = !deterministic && sigma > 0.0f;
    for (size_t i = 0; i < out.tensor.data.size(); ++i) {
        float mean = scale * (sample.tensor.data[i] - ecoef * eps_pred[i]);
        out.tensor.data[i] = add_noise ? mean + sigma * rng.normal_f() : mean;
    }
    return out;
}

VideoTensor sample_loop(const EpsPredictFn& eps_fn, const NoiseSchedule& sched,
                        const VideoShape& shape, const ConditionSpec& cond, uint64_t seed) {
    NoisySample cur;
    cur.step = sched.num_steps;
    cur.tensor.shape = shape;
    cur.tensor.data.resize(static_cast<size_t>(shape.num_elements()));
    RngStream init(seed, purpose::kSampleInit, 0);
    init.fill_normal(cur.tensor.data);

    for (int t = sched.num_steps; t >= 1; --t) {
        std::vector<float> eps = eps_fn(cur, cond);
        RngStream step_rng(seed, purpose::kSampleStep, static_cast<uint64_t>(t));
        cur = ddpm_step(cur, eps, sched, step_rng);
    }
    return std::move(cur.tensor);
}

std::pair<int, std::vector<float>> draw_loss_noise(uint64_t seed, uint64_t index, int num_steps,
                                                   int num_elements) {
    RngStream t_rng(seed, purpose::kLossTimestep, index);
    int t = static_cast<int>(t_rng.uniform_int(static_cast<uint64_t>(num_steps))) + 1;
    RngStream e_rng(seed, purpose::kLossNoise, index);
    std::vector<float> eps(static_cast<size_t>(num_elements));
    e_rng.fill_normal(eps);
    return {t, std::move(eps)};
}

double denoising_loss(const EpsPredictFn& predict,
                      const std::vector<std::pair<VideoTensor, ConditionSpec>>& batch,
                      const NoiseSchedule& sched, uint64_t seed) {
    if (batch.empty()) throw std::invalid_argument("denoising_loss: empty batch");
    double total = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& [tau, cond] = batch[i];
        auto [t, eps] = draw_loss_noise(seed, i, sched.num_steps,
                                        static_cast<int>(tau.data.size()));
        NoisySample noisy = forward_noise(tau, t, eps, sched);
        std::vector<float> pred = predict(noisy, cond);
        if (pred.size() != eps.size())
            throw std::invalid_argument("denoising_loss: prediction shape mismatch");
        double sq = 0.0;
        for (size_t k = 0; k < eps.size(); ++k) {
            double d = static_cast<double>(eps[k]) - static_cast<double>(pred[k]);
            sq += d * d;
        }
        total += sq;
    }
    return total / static_cast<double>(batch.size());
}

std::vector<double> tweedie_posterior_mean(std::span<const double> y,
                                           std::span<const double> score_at_y, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("tweedie_posterior_mean: sigma must be > 0");
    if (y.size() != score_at_y.size())
        throw std::invalid_argument("tweedie_posterior_mean: shape mismatch");
    std::vector<double> m(y.size());
    double s2 = sigma * sigma;
    for (size_t i = 0; i < y.size(); ++i) m[i] = y[i] + s2 * score_at_y[i];
    return m;
}

std::vector<float> eps_to_score(std::span<const float> eps_pred, int t,
                                const NoiseSchedule& sched) {
    if (!sched.step_in_range(t)) throw std::invalid_argument("eps_to_score: step out of range");
    double sb = sched.sigma_bar_at(t);
    if (sb == 0.0) throw std::invalid_argument("eps_to_score: sigma_bar is zero at this step");
    float inv = static_cast<float>(-1.0 / sb);
    std::vector<float> score(eps_pred.size());
    for (size_t i = 0; i < eps_pred.size(); ++i) score[i] = eps_pred[i] * inv;
    return score;
}

std::vector<float> score_to_eps(std::span<const float> score, int t, const NoiseSchedule& sched) {
    if (!sched.step_in_range(t)) throw std::invalid_argument("score_to_eps: step out of range");
    float neg_sb = static_cast<float>(-sched.sigma_bar_at(t));
    std::vector<float> eps(score.size());
    for (size_t i = 0; i < score.size(); ++i) eps[i] = score[i] * neg_sb;
    return eps;
}

}  // namespace vad
