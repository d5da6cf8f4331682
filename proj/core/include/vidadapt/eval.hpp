#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vidadapt/adapter.hpp"
#include "vidadapt/denoiser.hpp"
#include "vidadapt/worlds.hpp"

namespace vad {

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // population covariance
    int count = 0;
};

// Frozen random conv projection + pooled statistics: a desk-scale,
// non-comparable analog of the pretrained feature networks behind FVD/FID.
// The probe is fully determined by (seed, in_channels, num_kernels) and is
// hash-pinned in benchmark reports so every row shares it.
struct FeatureProbe {
    int in_channels = 1;
    int num_kernels = 8;
    uint64_t seed = 0;
    std::vector<float> kernels;  // (num_kernels, in_channels, 3, 3)

    static FeatureProbe from_seed(uint64_t seed, int in_channels, int num_kernels);
    int feature_dim() const { return 4 * num_kernels; }
    uint64_t hash() const;
};

// Per-video feature vector: per filter, mean / mean-abs / per-frame spatial
// std / mean absolute temporal difference of the tanh conv response.
std::vector<double> probe_features(const FeatureProbe& probe, const VideoTensor& video);

FeatureStats extract_features(const std::vector<VideoTensor>& videos, const FeatureProbe& probe);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}); matrix square roots via
// symmetric eigendecomposition with negative eigenvalues clipped at 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

enum class BenchmarkRowKind { kAdapterOnly, kPretrainedOnly, kComposed, kCfgMix, kFinetune };
std::string row_kind_name(BenchmarkRowKind kind);

struct BenchmarkPlan {
    ScheduleSummary schedule{64, -20.0, 20.0};
    ArchitectureDescriptor pretrained_desc;
    ArchitectureDescriptor adapter_desc;
    TrainConfig pretrain_train;
    TrainConfig adapter_train;
    CompositionConfig composition;
    double cfg_mix_weight = 0.5;
    int num_samples = 256;  // generated clips per row
    uint64_t probe_seed = 0x9A0B;
    int probe_kernels = 8;
    int sample_threads = 2;
    std::vector<BenchmarkRowKind> rows{
        BenchmarkRowKind::kAdapterOnly, BenchmarkRowKind::kPretrainedOnly,
        BenchmarkRowKind::kComposed, BenchmarkRowKind::kCfgMix, BenchmarkRowKind::kFinetune};

    std::string echo() const;
};

struct BenchmarkRow {
    std::string config_name;
    uint64_t seed = 0;
    double frechet = 0.0;
    int64_t trained_params = 0;
    double wall_seconds = 0.0;
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> rows;
    std::vector<uint64_t> seeds;
    std::string config_echo;
    uint64_t probe_hash = 0;
};

// Per seed: trains the broad prior on the pretrain corpus and the adapter on
// the adaptation train split, builds the compute-matched finetune baseline,
// then samples num_samples clips per row (identical per-clip seeds across
// rows) and scores each row's Frechet distance against the adaptation test
// split.
BenchmarkReport run_benchmark(const BenchmarkPlan& plan, const CorpusSplit& corpora,
                              std::span<const uint64_t> seeds);

// Continues training of the (frozen elsewhere) prior on the adaptation
// corpus for a step budget; the benchmark matches compute via the parameter
// count ratio as a FLOP proxy.
TrainResult finetune_baseline(const DenoiserCheckpoint& pretrained, const Dataset& adapt_corpus,
                              int step_budget, const TrainConfig& base_cfg,
                              const NoiseSchedule& sched);

int compute_matched_budget(int adapter_steps, int64_t adapter_params, int64_t pretrained_params);

// Delimited text table; columns: config, seed, frechet, trained_params,
// wall_seconds. Config echo and probe hash ride along as comment lines.
std::string format_report(const BenchmarkReport& report);

// Deterministic per-clip sampling helper shared by benchmark rows and the
// CLI (clip k uses seed derive_seed(seed, 0xC11F0000 + k)), parallel over
// clips.
std::vector<VideoTensor> sample_clips(
    const std::function<VideoTensor(uint64_t clip_seed)>& sampler, int count, uint64_t seed,
    int threads);

}  // namespace vad
