#include "vidadapt/adapter.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace vad {

void CompositionConfig::validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("composition: gamma must be >= 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("composition: alpha must be >= 0");
    if (cutoff_fraction < 0.0 || cutoff_fraction > 1.0)
        throw std::invalid_argument("composition: cutoff_fraction must be in [0,1]");
    if (mcmc_steps < 0) throw std::invalid_argument("composition: mcmc_steps must be >= 0");
    if (mcmc_steps > 0 && !(mcmc_step_size > 0.0))
        throw std::invalid_argument("composition: mcmc_step_size must be > 0");
}

ScoreSource make_local_source(DenoiserCheckpoint ckpt) {
    auto shared = std::make_shared<DenoiserCheckpoint>(std::move(ckpt));
    ScoreSource src;
    src.has_unconditional = true;
    src.eps = [shared](const NoisySample& sample, const ConditionSpec& cond) {
        return predict_eps(*shared, sample, cond);
    };
    return src;
}

ConditionSpec to_null(const ConditionSpec& cond) {
    ConditionSpec null = cond;
    null.label_id.reset();
    null.is_null = true;
    return null;
}

std::vector<float> composed_eps(std::span<const float> eps_adapter,
                                std::span<const float> eps_pretrained, double gamma) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("composed_eps: gamma must be >= 0");
    if (gamma == 0.0) return {eps_adapter.begin(), eps_adapter.end()};
    if (eps_adapter.size() != eps_pretrained.size())
        throw std::invalid_argument("composed_eps: shape mismatch");
    float g = static_cast<float>(gamma);
    std::vector<float> out(eps_adapter.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = eps_adapter[i] + g * eps_pretrained[i];
    return out;
}

std::vector<float> cfg_eps(std::span<const float> eps_uncond, std::span<const float> eps_cond,
                           double alpha) {
    if (eps_uncond.size() != eps_cond.size())
        throw std::invalid_argument("cfg_eps: shape mismatch");
    if (alpha == 0.0) return {eps_uncond.begin(), eps_uncond.end()};
    if (alpha == 1.0) return {eps_cond.begin(), eps_cond.end()};
    float a = static_cast<float>(alpha);
    std::vector<float> out(eps_uncond.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = eps_uncond[i] + a * (eps_cond[i] - eps_uncond[i]);
    return out;
}

std::vector<float> adapter_cfg_eps(std::span<const float> eps_uncond,
                                   std::span<const float> eps_cond_adapter,
                                   std::span<const float> eps_cond_pretrained, double alpha,
                                   double gamma) {
    if (gamma == 0.0) return cfg_eps(eps_uncond, eps_cond_adapter, alpha);
    if (eps_uncond.size() != eps_cond_adapter.size() ||
        eps_cond_adapter.size() != eps_cond_pretrained.size())
        throw std::invalid_argument("adapter_cfg_eps: shape mismatch");
    if (alpha == 0.0) return {eps_uncond.begin(), eps_uncond.end()};
    float a = static_cast<float>(alpha);
    float g = static_cast<float>(gamma);
    std::vector<float> out(eps_uncond.size());
    for (size_t i = 0; i < out.size(); ++i) {
        float mixed = eps_cond_adapter[i] + g * eps_cond_pretrained[i];
        out[i] = eps_uncond[i] + a * (mixed - eps_uncond[i]);
    }
    return out;
}

std::vector<float> cfg_mix_eps(std::span<const float> uncond_adapter,
                               std::span<const float> cond_adapter,
                               std::span<const float> uncond_pretrained,
                               std::span<const float> cond_pretrained, double alpha, double w) {
    if (w < 0.0 || w > 1.0) throw std::invalid_argument("cfg_mix_eps: w must be in [0,1]");
    if (w == 0.0) return cfg_eps(uncond_adapter, cond_adapter, alpha);
    if (w == 1.0) return cfg_eps(uncond_pretrained, cond_pretrained, alpha);
    std::vector<float> a = cfg_eps(uncond_adapter, cond_adapter, alpha);
    std::vector<float> p = cfg_eps(uncond_pretrained, cond_pretrained, alpha);
    if (a.size() != p.size()) throw std::invalid_argument("cfg_mix_eps: shape mismatch");
    float wf = static_cast<float>(w);
    std::vector<float> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = (1.0f - wf) * a[i] + wf * p[i];
    return out;
}

namespace {

[[noreturn]] void rethrow_with_step(int t, const std::exception& e) {
    throw std::runtime_error("sampling failed at step " + std::to_string(t) + ": " + e.what());
}

NoisySample init_chain(const VideoShape& shape, int num_steps, uint64_t seed) {
    NoisySample cur;
    cur.step = num_steps;
    cur.tensor.shape = shape;
    cur.tensor.data.resize(static_cast<size_t>(shape.num_elements()));
    RngStream init(seed, purpose::kSampleInit, 0);
    init.fill_normal(cur.tensor.data);
    return cur;
}

}  // namespace

VideoTensor cfg_sample(const ScoreSource& model, double alpha, const NoiseSchedule& sched,
                       const VideoShape& shape, const ConditionSpec& cond, uint64_t seed) {
    if (!model.has_unconditional)
        throw std::invalid_argument("cfg_sample: model must expose an unconditional branch");
    ConditionSpec null = to_null(cond);
    NoisySample cur = init_chain(shape, sched.num_steps, seed);
    for (int t = sched.num_steps; t >= 1; --t) {
        std::vector<float> guided;
        try {
            std::vector<float> u = model.eps(cur, null);
            std::vector<float> c = model.eps(cur, cond);
            guided = cfg_eps(u, c, alpha);
        } catch (const std::exception& e) {
            rethrow_with_step(t, e);
        }
        RngStream step_rng(seed, purpose::kSampleStep, static_cast<uint64_t>(t));
        cur = ddpm_step(cur, guided, sched, step_rng);
    }
    return std::move(cur.tensor);
}

VideoTensor composed_sample(const ScoreSource& adapter, const ScoreSource& pretrained,
                            const CompositionConfig& cfg, const NoiseSchedule& sched,
                            const VideoShape& shape, const ConditionSpec& cond, uint64_t seed) {
    cfg.validate();
    if (!adapter.has_unconditional)
        throw std::invalid_argument("composed_sample: adapter must expose an unconditional branch");
    ConditionSpec null = to_null(cond);
    // the prior is dropped for the final cutoff_fraction * T steps
    int cutoff_steps = static_cast<int>(std::floor(cfg.cutoff_fraction * sched.num_steps));

    auto guided_at = [&](const NoisySample& at, int t) {
        double gamma_eff = (t <= cutoff_steps) ? 0.0 : cfg.gamma;
        std::vector<float> u = adapter.eps(at, null);
        std::vector<float> c_a = adapter.eps(at, cond);
        std::vector<float> c_p;
        if (gamma_eff > 0.0) c_p = pretrained.eps(at, cond);
        return adapter_cfg_eps(u, c_a, c_p, cfg.alpha, gamma_eff);
    };

    NoisySample cur = init_chain(shape, sched.num_steps, seed);
    for (int t = sched.num_steps; t >= 1; --t) {
        std::vector<float> guided;
        try {
            guided = guided_at(cur, t);
        } catch (const std::exception& e) {
            rethrow_with_step(t, e);
        }
        RngStream step_rng(seed, purpose::kSampleStep, static_cast<uint64_t>(t));
        cur = ddpm_step(cur, guided, sched, step_rng);

        if (cfg.mcmc_steps > 0 && cur.step >= 1) {
            // Langevin correctors at the new level with the same composed
            // score; eta = mcmc_step_size * sigma_bar^2.
            double sb = sched.sigma_bar_at(cur.step);
            float eta = static_cast<float>(cfg.mcmc_step_size * sb * sb);
            float kick = std::sqrt(2.0f * eta);
            float inv_sb = static_cast<float>(1.0 / sb);
            RngStream mcmc_rng(seed, purpose::kMcmc, static_cast<uint64_t>(cur.step));
            for (int k = 0; k < cfg.mcmc_steps; ++k) {
                std::vector<float> eps_hat;
                try {
                    eps_hat = guided_at(cur, cur.step);
                } catch (const std::exception& e) {
                    rethrow_with_step(cur.step, e);
                }
                for (size_t i = 0; i < cur.tensor.data.size(); ++i) {
                    float score = -eps_hat[i] * inv_sb;
                    cur.tensor.data[i] += eta * score + kick * mcmc_rng.normal_f();
                }
            }
        }
    }
    return std::move(cur.tensor);
}

VideoTensor cfg_mix_sample(const ScoreSource& adapter, const ScoreSource& pretrained,
                           double alpha, double w, const NoiseSchedule& sched,
                           const VideoShape& shape, const ConditionSpec& cond, uint64_t seed) {
    if (!adapter.has_unconditional || !pretrained.has_unconditional)
        throw std::invalid_argument("cfg_mix_sample: both models need unconditional branches");
    ConditionSpec null = to_null(cond);
    NoisySample cur = init_chain(shape, sched.num_steps, seed);
    for (int t = sched.num_steps; t >= 1; --t) {
        std::vector<float> mixed;
        try {
            std::vector<float> u_a = adapter.eps(cur, null);
            std::vector<float> c_a = adapter.eps(cur, cond);
            std::vector<float> u_p = pretrained.eps(cur, null);
            std::vector<float> c_p = pretrained.eps(cur, cond);
            mixed = cfg_mix_eps(u_a, c_a, u_p, c_p, alpha, w);
        } catch (const std::exception& e) {
            rethrow_with_step(t, e);
        }
        RngStream step_rng(seed, purpose::kSampleStep, static_cast<uint64_t>(t));
        cur = ddpm_step(cur, mixed, sched, step_rng);
    }
    return std::move(cur.tensor);
}

}  // namespace vad
