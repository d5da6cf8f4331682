#pragma once

#include <span>
#include <vector>

#include "vidadapt/denoiser.hpp"
#include "vidadapt/diffusion.hpp"
#include "vidadapt/schedule.hpp"
#include "vidadapt/tensor.hpp"

namespace vad {

// Knobs for sampling from the product of an adapter model and a frozen
// prior: gamma scales the prior's eps contribution (tempering the prior
// density), alpha is the guidance weight, and cutoff_fraction drops the
// prior term for the final fraction of the denoising steps.
struct CompositionConfig {
    double gamma = 0.2;
    double alpha = 2.0;
    double cutoff_fraction = 0.1;
    int mcmc_steps = 0;            // Langevin corrector updates per level
    double mcmc_step_size = 0.1;   // step size factor, times sigma_bar[t]^2

    void validate() const;
};

// An eps-prediction source: a local checkpoint or a remote client.
struct ScoreSource {
    EpsPredictFn eps;
    bool has_unconditional = true;
};

ScoreSource make_local_source(DenoiserCheckpoint ckpt);

// eps_adapter + gamma * eps_pretrained. gamma == 0 returns the adapter
// prediction unchanged (bitwise; the reductions below are contracts).
std::vector<float> composed_eps(std::span<const float> eps_adapter,
                                std::span<const float> eps_pretrained, double gamma);

// Classifier-free combination u + alpha * (c - u); alpha == 0 returns u and
// alpha == 1 returns c, both bitwise.
std::vector<float> cfg_eps(std::span<const float> eps_uncond, std::span<const float> eps_cond,
                           double alpha);

// Guided composition eps_uncond + alpha * (eps_cond_adapter +
// gamma * eps_cond_pretrained - eps_uncond). The unconditional branch comes
// from the adapter only. eps_cond_pretrained may be empty when gamma == 0.
std::vector<float> adapter_cfg_eps(std::span<const float> eps_uncond,
                                   std::span<const float> eps_cond_adapter,
                                   std::span<const float> eps_cond_pretrained, double alpha,
                                   double gamma);

// Ablation baseline: (1-w) * cfg(adapter pair) + w * cfg(pretrained pair).
std::vector<float> cfg_mix_eps(std::span<const float> uncond_adapter,
                               std::span<const float> cond_adapter,
                               std::span<const float> uncond_pretrained,
                               std::span<const float> cond_pretrained, double alpha, double w);

// Classifier-free-guided reverse chain on a single model.
VideoTensor cfg_sample(const ScoreSource& model, double alpha, const NoiseSchedule& sched,
                       const VideoShape& shape, const ConditionSpec& cond, uint64_t seed);

// Reverse chain over the composed score. The prior is queried with
// conditioning only; during the final cutoff_fraction * T steps its term is
// dropped (and it is not queried). With gamma = 0, cutoff = 0 and no
// correctors this is bit-identical to cfg_sample on the adapter under the
// same seed. Score-source failures surface with the step index attached.
VideoTensor composed_sample(const ScoreSource& adapter, const ScoreSource& pretrained,
                            const CompositionConfig& cfg, const NoiseSchedule& sched,
                            const VideoShape& shape, const ConditionSpec& cond, uint64_t seed);

// CFG-Mix ablation chain: interpolates the two models' complete
// classifier-free scores instead of composing densities.
VideoTensor cfg_mix_sample(const ScoreSource& adapter, const ScoreSource& pretrained,
                           double alpha, double w, const NoiseSchedule& sched,
                           const VideoShape& shape, const ConditionSpec& cond, uint64_t seed);

// The unconditional twin of a condition: null label, same aux tensors.
ConditionSpec to_null(const ConditionSpec& cond);

}  // namespace vad
