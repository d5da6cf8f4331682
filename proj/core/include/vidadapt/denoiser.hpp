#pragma once

#include <string>
#include <vector>

#include "vidadapt/conditioning.hpp"
#include "vidadapt/nets.hpp"
#include "vidadapt/schedule.hpp"
#include "vidadapt/tensor.hpp"
#include "vidadapt/worlds.hpp"

namespace vad {

struct ScheduleSummary {
    int num_steps = 0;
    double logsnr_min = 0.0;
    double logsnr_max = 0.0;
    bool operator==(const ScheduleSummary&) const = default;
};

inline ScheduleSummary summarize(const NoiseSchedule& s) {
    return {s.num_steps, s.logsnr_min, s.logsnr_max};
}

struct TrainMeta {
    int64_t steps_trained = 0;
    std::string dataset_id;
    double cond_dropout = 0.0;
};

struct DenoiserCheckpoint {
    ArchitectureDescriptor descriptor;
    ScheduleSummary schedule;
    TrainMeta meta;
    std::vector<float> params;
};

struct TrainConfig {
    int steps = 100;
    int batch_size = 8;
    double learning_rate = 1e-4;  // plain gradient descent, fixed rate
    double cond_dropout = 0.1;    // probability of training on the null branch
    double grad_clip = 1.0;       // global gradient-norm clip
    uint64_t seed = 0;

    void validate() const;
};

// Fan-in-scaled random initialization (see param_segments); deterministic
// per (descriptor, seed).
DenoiserCheckpoint init_denoiser(const ArchitectureDescriptor& desc, const ScheduleSummary& sched,
                                 uint64_t seed);

// eps prediction with full condition validation (label vs null branch, aux
// condition channels per the descriptor's conditioning mode). float64
// overloads evaluate the same parameters in double for verification paths.
std::vector<float> predict_eps(const DenoiserCheckpoint& ckpt, const NoisySample& sample,
                               const ConditionSpec& cond);
std::vector<double> predict_eps_f64(const DenoiserCheckpoint& ckpt,
                                    const std::vector<double>& flat_input, int t,
                                    const ConditionSpec& cond);
double predict_energy_f64(const DenoiserCheckpoint& ckpt, const std::vector<double>& flat_input,
                          int t, const ConditionSpec& cond);

struct TrainResult {
    DenoiserCheckpoint checkpoint;
    std::vector<double> loss_curve;  // per-step batch loss
};

// Minibatch gradient descent on the denoising regression loss. Batch
// records, (t, eps) pairs and condition dropout are all drawn from streams
// keyed by (seed, step, item), so a run is a pure function of its inputs.
// Aborts if the loss turns non-finite.
TrainResult train_denoiser(const DenoiserCheckpoint& ckpt, const Dataset& dataset,
                           const TrainConfig& cfg, const NoiseSchedule& sched);

// Builds the condition a model of the given mode sees for a dataset record.
ConditionSpec condition_from_record(const DatasetRecord& rec, CondMode mode, bool null_label);

// Assembled net input for a noisy tensor + condition (aux channels appended
// in (frames, channels, height, width) order); exposed for tests.
std::vector<float> assemble_model_input(const ArchitectureDescriptor& desc,
                                        const VideoTensor& noisy, const ConditionSpec& cond);
int condition_label_row(const ArchitectureDescriptor& desc, const ConditionSpec& cond);

// Checkpoint file: magic "VADP", version u32, header length u32, key=value
// header text (descriptor, schedule summary, metadata), then the parameter
// blob as little-endian float32 in param_segments order.
void save_checkpoint(const DenoiserCheckpoint& ckpt, const std::string& path);
DenoiserCheckpoint load_checkpoint(const std::string& path);

}  // namespace vad
