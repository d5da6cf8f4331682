#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "vidadapt/rng.hpp"
#include "vidadapt/schedule.hpp"
#include "vidadapt/tensor.hpp"

namespace vad {

// eps-prediction callback: estimate of the noise in a noisy sample.
using EpsPredictFn =
    std::function<std::vector<float>(const NoisySample&, const ConditionSpec&)>;

// x_t = sqrt(alpha_bar[t]) * tau + sigma_bar[t] * eps
NoisySample forward_noise(const VideoTensor& tau, int t, std::span<const float> eps,
                          const NoiseSchedule& sched);

// One ancestral reverse step t -> t-1 (coefficients documented in
// schedule.hpp). `deterministic` forces the injected noise to zero; rng is
// otherwise consumed only when step_sigma > 0.
NoisySample ddpm_step(const NoisySample& sample, std::span<const float> eps_pred,
                      const NoiseSchedule& sched, RngStream& rng, bool deterministic = false);

// Full reverse chain from tau_T ~ N(0, I). Noise draws are keyed by
// (seed, purpose, step), so the output is a pure function of
// (eps_fn, sched, shape, cond, seed).
VideoTensor sample_loop(const EpsPredictFn& eps_fn, const NoiseSchedule& sched,
                        const VideoShape& shape, const ConditionSpec& cond, uint64_t seed);

// Mean over the batch of ||eps - predict(x_t, t, cond)||^2 with t uniform in
// {1..T} and eps standard normal, both drawn from streams keyed by
// (seed, purpose, batch index).
double denoising_loss(const EpsPredictFn& predict,
                      const std::vector<std::pair<VideoTensor, ConditionSpec>>& batch,
                      const NoiseSchedule& sched, uint64_t seed);

// The (t, eps) draw used by denoising_loss for batch item i; the trainer
// reuses it so reported losses match denoising_loss on the same seed.
std::pair<int, std::vector<float>> draw_loss_noise(uint64_t seed, uint64_t index, int num_steps,
                                                   int num_elements);

// Posterior mean of the clean signal under Gaussian noise of scale sigma:
// m(y) = y + sigma^2 * score(y).
std::vector<double> tweedie_posterior_mean(std::span<const double> y,
                                           std::span<const double> score_at_y, double sigma);

// score = -eps / sigma_bar[t]; score_to_eps is the exact inverse.
std::vector<float> eps_to_score(std::span<const float> eps_pred, int t, const NoiseSchedule& sched);
std::vector<float> score_to_eps(std::span<const float> score, int t, const NoiseSchedule& sched);

}  // namespace vad
