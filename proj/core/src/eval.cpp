#include "vidadapt/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vidadapt/hash.hpp"
#include "vidadapt/rng.hpp"

namespace vad {

std::string hash_hex(uint64_t h) {
    char buf[19];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

FeatureProbe FeatureProbe::from_seed(uint64_t seed, int in_channels, int num_kernels) {
    if (in_channels < 1 || num_kernels < 1)
        throw std::invalid_argument("feature probe: channels and kernels must be positive");
    FeatureProbe p;
    p.in_channels = in_channels;
    p.num_kernels = num_kernels;
    p.seed = seed;
    p.kernels.resize(static_cast<size_t>(num_kernels) * in_channels * 9);
    float scale = 1.0f / std::sqrt(9.0f * static_cast<float>(in_channels));
    for (int k = 0; k < num_kernels; ++k) {
        RngStream rng(seed, purpose::kProbeInit, static_cast<uint64_t>(k));
        for (int i = 0; i < in_channels * 9; ++i)
            p.kernels[static_cast<size_t>(k) * in_channels * 9 + i] = scale * rng.normal_f();
    }
    return p;
}

uint64_t FeatureProbe::hash() const {
    uint64_t h = fnv1a64_pod_array<float>(kernels);
    uint64_t meta[3] = {static_cast<uint64_t>(in_channels), static_cast<uint64_t>(num_kernels),
                        seed};
    return fnv1a64_pod_array<uint64_t>(std::span<const uint64_t>(meta, 3), h);
}

std::vector<double> probe_features(const FeatureProbe& probe, const VideoTensor& video) {
    check_shape_consistent(video);
    const auto& s = video.shape;
    if (s.channels != probe.in_channels)
        throw std::invalid_argument("probe_features: channel mismatch");

    int K = probe.num_kernels;
    std::vector<double> feats(static_cast<size_t>(4) * K, 0.0);
    std::vector<double> act(static_cast<size_t>(s.frames) * s.height * s.width);
    for (int k = 0; k < K; ++k) {
        const float* w = probe.kernels.data() + static_cast<size_t>(k) * probe.in_channels * 9;
        for (int f = 0; f < s.frames; ++f) {
            for (int y = 0; y < s.height; ++y) {
                for (int x = 0; x < s.width; ++x) {
                    double acc = 0.0;
                    for (int dy = -1; dy <= 1; ++dy) {
                        int yy = y + dy;
                        if (yy < 0 || yy >= s.height) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            int xx = x + dx;
                            if (xx < 0 || xx >= s.width) continue;
                            for (int c = 0; c < s.channels; ++c)
                                acc += static_cast<double>(
                                           w[(c * 3 + dy + 1) * 3 + dx + 1]) *
                                       video.at(f, yy, xx, c);
                        }
                    }
                    act[(static_cast<size_t>(f) * s.height + y) * s.width + x] = std::tanh(acc);
                }
            }
        }
        int hw = s.height * s.width;
        double mean = 0.0, mean_abs = 0.0, std_sum = 0.0, tdiff = 0.0;
        for (int f = 0; f < s.frames; ++f) {
            const double* a = act.data() + static_cast<size_t>(f) * hw;
            double m = 0.0, m2 = 0.0;
            for (int i = 0; i < hw; ++i) {
                m += a[i];
                m2 += a[i] * a[i];
                mean_abs += std::abs(a[i]);
            }
            m /= hw;
            m2 /= hw;
            mean += m;
            std_sum += std::sqrt(std::max(0.0, m2 - m * m));
            if (f > 0) {
                const double* prev = a - hw;
                double d = 0.0;
                for (int i = 0; i < hw; ++i) d += std::abs(a[i] - prev[i]);
                tdiff += d / hw;
            }
        }
        feats[static_cast<size_t>(4) * k + 0] = mean / s.frames;
        feats[static_cast<size_t>(4) * k + 1] = mean_abs / (static_cast<double>(s.frames) * hw);
        feats[static_cast<size_t>(4) * k + 2] = std_sum / s.frames;
        feats[static_cast<size_t>(4) * k + 3] = s.frames > 1 ? tdiff / (s.frames - 1) : 0.0;
    }
    return feats;
}

FeatureStats extract_features(const std::vector<VideoTensor>& videos, const FeatureProbe& probe) {
    if (videos.size() < 2)
        throw std::invalid_argument("extract_features: need at least 2 videos");
    int dim = probe.feature_dim();
    Eigen::MatrixXd feats(static_cast<long>(videos.size()), dim);
    for (size_t i = 0; i < videos.size(); ++i) {
        std::vector<double> f = probe_features(probe, videos[i]);
        for (int d = 0; d < dim; ++d) feats(static_cast<long>(i), d) = f[static_cast<size_t>(d)];
    }
    FeatureStats stats;
    stats.count = static_cast<int>(videos.size());
    stats.mean = feats.colwise().mean();
    Eigen::MatrixXd centered = feats.rowwise() - stats.mean.transpose();
    stats.cov = (centered.transpose() * centered) / static_cast<double>(videos.size());
    return stats;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet: dimension mismatch");
    Eigen::MatrixXd sqrt_a = psd_sqrt(a.cov);
    Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
    double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    return std::max(d, 0.0);
}

std::string row_kind_name(BenchmarkRowKind kind) {
    switch (kind) {
        case BenchmarkRowKind::kAdapterOnly: return "adapter_only";
        case BenchmarkRowKind::kPretrainedOnly: return "pretrained_only";
        case BenchmarkRowKind::kComposed: return "composed";
        case BenchmarkRowKind::kCfgMix: return "cfg_mix";
        case BenchmarkRowKind::kFinetune: return "finetune";
    }
    return "?";
}

std::string BenchmarkPlan::echo() const {
    std::ostringstream os;
    os << "sched_steps=" << schedule.num_steps << " logsnr=[" << schedule.logsnr_min << ","
       << schedule.logsnr_max << "]"
       << " pretrained(hidden=" << pretrained_desc.hidden << ",blocks=" << pretrained_desc.blocks
       << ",params=" << pretrained_desc.param_count() << ")"
       << " adapter(hidden=" << adapter_desc.hidden << ",blocks=" << adapter_desc.blocks
       << ",params=" << adapter_desc.param_count() << ")"
       << " pretrain_steps=" << pretrain_train.steps << " adapter_steps=" << adapter_train.steps
       << " batch=" << adapter_train.batch_size << " lr=" << adapter_train.learning_rate
       << " gamma=" << composition.gamma << " alpha=" << composition.alpha
       << " cutoff=" << composition.cutoff_fraction << " mix_w=" << cfg_mix_weight
       << " samples=" << num_samples << " probe_seed=" << probe_seed
       << " probe_kernels=" << probe_kernels;
    return os.str();
}

std::vector<VideoTensor> sample_clips(
    const std::function<VideoTensor(uint64_t clip_seed)>& sampler, int count, uint64_t seed,
    int threads) {
    std::vector<VideoTensor> clips(static_cast<size_t>(count));
    threads = std::max(1, std::min(threads, count));
    auto worker = [&](int begin, int end) {
        for (int k = begin; k < end; ++k)
            clips[static_cast<size_t>(k)] = sampler(derive_seed(seed, 0xC11F0000ull + k));
    };
    if (threads == 1) {
        worker(0, count);
    } else {
        std::vector<std::thread> pool;
        int chunk = (count + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            int begin = w * chunk, end = std::min(count, begin + chunk);
            if (begin < end) pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    return clips;
}

int compute_matched_budget(int adapter_steps, int64_t adapter_params, int64_t pretrained_params) {
    if (pretrained_params <= 0) throw std::invalid_argument("budget: pretrained params must be > 0");
    double ratio = static_cast<double>(adapter_params) / static_cast<double>(pretrained_params);
    return std::max(1, static_cast<int>(std::lround(adapter_steps * ratio)));
}

TrainResult finetune_baseline(const DenoiserCheckpoint& pretrained, const Dataset& adapt_corpus,
                              int step_budget, const TrainConfig& base_cfg,
                              const NoiseSchedule& sched) {
    if (step_budget < 1) throw std::invalid_argument("finetune: step budget must be >= 1");
    TrainConfig cfg = base_cfg;
    cfg.steps = step_budget;
    return train_denoiser(pretrained, adapt_corpus, cfg, sched);
}

BenchmarkReport run_benchmark(const BenchmarkPlan& plan, const CorpusSplit& corpora,
                              std::span<const uint64_t> seeds) {
    if (corpora.pretrain.records.empty() || corpora.adapt_train.records.empty() ||
        corpora.adapt_test.records.empty())
        throw std::invalid_argument("run_benchmark: missing corpus");
    NoiseSchedule sched =
        make_schedule(plan.schedule.num_steps, plan.schedule.logsnr_min, plan.schedule.logsnr_max);
    FeatureProbe probe = FeatureProbe::from_seed(plan.probe_seed,
                                                 corpora.adapt_test.shape.channels,
                                                 plan.probe_kernels);

    BenchmarkReport report;
    report.seeds.assign(seeds.begin(), seeds.end());
    report.config_echo = plan.echo();
    report.probe_hash = probe.hash();

    std::vector<VideoTensor> test_videos;
    for (const auto& r : corpora.adapt_test.records) test_videos.push_back(r.video);
    FeatureStats target = extract_features(test_videos, probe);

    int adapt_label = corpora.adapt_train.records.front().label_id;
    VideoShape shape = corpora.adapt_train.shape;

    for (uint64_t seed : seeds) {
        TrainConfig pre_cfg = plan.pretrain_train;
        pre_cfg.seed = derive_seed(seed, 1);
        DenoiserCheckpoint pre0 =
            init_denoiser(plan.pretrained_desc, plan.schedule, derive_seed(seed, 11));
        DenoiserCheckpoint pretrained =
            train_denoiser(pre0, corpora.pretrain, pre_cfg, sched).checkpoint;

        TrainConfig ad_cfg = plan.adapter_train;
        ad_cfg.seed = derive_seed(seed, 2);
        DenoiserCheckpoint ad0 =
            init_denoiser(plan.adapter_desc, plan.schedule, derive_seed(seed, 12));
        DenoiserCheckpoint adapter =
            train_denoiser(ad0, corpora.adapt_train, ad_cfg, sched).checkpoint;

        int budget = compute_matched_budget(plan.adapter_train.steps,
                                            plan.adapter_desc.param_count(),
                                            plan.pretrained_desc.param_count());
        TrainConfig ft_cfg = plan.pretrain_train;
        ft_cfg.seed = derive_seed(seed, 3);
        DenoiserCheckpoint finetuned =
            finetune_baseline(pretrained, corpora.adapt_train, budget, ft_cfg, sched).checkpoint;

        ScoreSource adapter_src = make_local_source(adapter);
        ScoreSource pretrained_src = make_local_source(pretrained);
        ScoreSource finetuned_src = make_local_source(finetuned);
        ConditionSpec cond = ConditionSpec::label(adapt_label);

        for (BenchmarkRowKind kind : plan.rows) {
            auto t0 = std::chrono::steady_clock::now();
            auto sampler = [&](uint64_t clip_seed) -> VideoTensor {
                switch (kind) {
                    case BenchmarkRowKind::kAdapterOnly:
                        return cfg_sample(adapter_src, plan.composition.alpha, sched, shape, cond,
                                          clip_seed);
                    case BenchmarkRowKind::kPretrainedOnly:
                        return cfg_sample(pretrained_src, plan.composition.alpha, sched, shape,
                                          cond, clip_seed);
                    case BenchmarkRowKind::kComposed:
                        return composed_sample(adapter_src, pretrained_src, plan.composition,
                                               sched, shape, cond, clip_seed);
                    case BenchmarkRowKind::kCfgMix:
                        return cfg_mix_sample(adapter_src, pretrained_src, plan.composition.alpha,
                                              plan.cfg_mix_weight, sched, shape, cond, clip_seed);
                    case BenchmarkRowKind::kFinetune:
                        return cfg_sample(finetuned_src, plan.composition.alpha, sched, shape,
                                          cond, clip_seed);
                }
                throw std::logic_error("unknown row kind");
            };
            std::vector<VideoTensor> clips =
                sample_clips(sampler, plan.num_samples, seed, plan.sample_threads);
            FeatureStats stats = extract_features(clips, probe);
            double fd = frechet_distance(stats, target);
            if (!std::isfinite(fd)) throw std::runtime_error("run_benchmark: non-finite metric");
            auto t1 = std::chrono::steady_clock::now();

            BenchmarkRow row;
            row.config_name = row_kind_name(kind);
            row.seed = seed;
            row.frechet = fd;
            switch (kind) {
                case BenchmarkRowKind::kPretrainedOnly:
                case BenchmarkRowKind::kFinetune:
                    row.trained_params = plan.pretrained_desc.param_count();
                    break;
                default:
                    row.trained_params = plan.adapter_desc.param_count();
            }
            row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
            report.rows.push_back(row);
        }
    }
    return report;
}

std::string format_report(const BenchmarkReport& report) {
    std::ostringstream os;
    os << "# probe_hash = " << hash_hex(report.probe_hash) << "\n";
    os << "# config = " << report.config_echo << "\n";
    os << "# seeds =";
    for (uint64_t s : report.seeds) os << " " << s;
    os << "\n";
    os << "config\tseed\tfrechet\ttrained_params\twall_seconds\n";
    for (const auto& r : report.rows) {
        os << r.config_name << "\t" << r.seed << "\t";
        char buf[64];
        snprintf(buf, sizeof buf, "%.6f", r.frechet);
        os << buf << "\t" << r.trained_params << "\t";
        snprintf(buf, sizeof buf, "%.3f", r.wall_seconds);
        os << buf << "\n";
    }
    return os.str();
}

}  // namespace vad
