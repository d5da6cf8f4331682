#include "vidadapt/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vidadapt/diffusion.hpp"
#include "vidadapt/rng.hpp"

namespace vad {

// ---------------------------------------------------------------- conditioning

VideoTensor make_first_frame_condition(const VideoTensor& frame, int frames) {
    check_shape_consistent(frame);
    if (frame.shape.frames != 1)
        throw std::invalid_argument("make_first_frame_condition: input must be a single frame");
    if (frames < 1) throw std::invalid_argument("make_first_frame_condition: frames must be >= 1");
    VideoTensor out({frames, frame.shape.height, frame.shape.width, frame.shape.channels});
    size_t stride = frame.data.size();
    for (int f = 0; f < frames; ++f)
        std::copy(frame.data.begin(), frame.data.end(),
                  out.data.begin() + static_cast<long>(f) * static_cast<long>(stride));
    return out;
}

VideoTensor sobel_raw(const VideoTensor& video) {
    check_shape_consistent(video);
    if (video.shape.width < 3) throw std::invalid_argument("sobel: width must be >= 3");
    static constexpr int kKernel[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const auto& s = video.shape;
    VideoTensor out(s);
    for (int f = 0; f < s.frames; ++f) {
        for (int c = 0; c < s.channels; ++c) {
            for (int y = 0; y < s.height; ++y) {
                for (int x = 0; x < s.width; ++x) {
                    float acc = 0.0f;
                    for (int dy = -1; dy <= 1; ++dy) {
                        int yy = std::clamp(y + dy, 0, s.height - 1);
                        for (int dx = -1; dx <= 1; ++dx) {
                            int xx = std::clamp(x + dx, 0, s.width - 1);
                            acc += static_cast<float>(kKernel[dy + 1][dx + 1]) *
                                   video.at(f, yy, xx, c);
                        }
                    }
                    out.at(f, y, x, c) = acc;
                }
            }
        }
    }
    return out;
}

VideoTensor sobel_edges(const VideoTensor& video) {
    VideoTensor out = sobel_raw(video);
    const auto& s = out.shape;
    long per_frame = static_cast<long>(s.height) * s.width * s.channels;
    for (int f = 0; f < s.frames; ++f) {
        float peak = 0.0f;
        float* frame = out.data.data() + f * per_frame;
        for (long i = 0; i < per_frame; ++i) peak = std::max(peak, std::abs(frame[i]));
        if (peak > 0.0f)
            for (long i = 0; i < per_frame; ++i) frame[i] /= peak;
    }
    return out;
}

// ---------------------------------------------------------------- checkpoint ops

void TrainConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be > 0");
    if (cond_dropout < 0.0 || cond_dropout >= 1.0)
        throw std::invalid_argument("train config: condition dropout must be in [0,1)");
    if (!(grad_clip > 0.0)) throw std::invalid_argument("train config: grad clip must be > 0");
}

DenoiserCheckpoint init_denoiser(const ArchitectureDescriptor& desc, const ScheduleSummary& sched,
                                 uint64_t seed) {
    desc.validate();
    DenoiserCheckpoint ckpt;
    ckpt.descriptor = desc;
    ckpt.schedule = sched;
    ckpt.params.resize(static_cast<size_t>(desc.param_count()));
    auto segs = param_segments(desc);
    for (size_t si = 0; si < segs.size(); ++si) {
        RngStream rng(seed, purpose::kParamInit, si);
        float scale = static_cast<float>(segs[si].init_scale);
        for (int64_t i = 0; i < segs[si].size; ++i)
            ckpt.params[static_cast<size_t>(segs[si].offset + i)] = scale * rng.normal_f();
    }
    return ckpt;
}

int condition_label_row(const ArchitectureDescriptor& desc, const ConditionSpec& cond) {
    if (desc.time_embed_dim == 0) return 0;  // no embedding table
    if (cond.is_null) {
        if (cond.label_id) throw std::invalid_argument("condition: is_null excludes label_id");
        return desc.vocab_size;
    }
    if (!cond.label_id)
        throw std::invalid_argument("condition: label_id required unless is_null is set");
    int id = *cond.label_id;
    if (id < 0 || id >= desc.vocab_size)
        throw std::invalid_argument("condition: label_id outside vocabulary");
    return id;
}

namespace {

// Transpose (F,H,W,C) channel-last data into the net's (F,C,H,W) layout.
void to_internal(const VideoTensor& t, float* dst, int channel_offset, int total_channels) {
    const auto& s = t.shape;
    for (int f = 0; f < s.frames; ++f)
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                for (int c = 0; c < s.channels; ++c)
                    dst[((static_cast<int64_t>(f) * total_channels + channel_offset + c) * s.height +
                         y) * s.width + x] = t.at(f, y, x, c);
}

void validate_condition_aux(const ArchitectureDescriptor& desc, const ConditionSpec& cond) {
    switch (desc.cond_mode) {
        case CondMode::kNone:
            if (cond.first_frame || cond.edge_video)
                throw std::invalid_argument("condition: model takes no auxiliary condition tensor");
            break;
        case CondMode::kFirstFrame: {
            if (!cond.first_frame)
                throw std::invalid_argument("condition: first_frame required by this model");
            const auto& fs = cond.first_frame->shape;
            if (fs.frames != 1 || fs.height != desc.input_shape.height ||
                fs.width != desc.input_shape.width || fs.channels != desc.input_shape.channels)
                throw std::invalid_argument("condition: first_frame dims mismatch");
            break;
        }
        case CondMode::kEdge: {
            if (!cond.edge_video)
                throw std::invalid_argument("condition: edge_video required by this model");
            if (!(cond.edge_video->shape == desc.input_shape))
                throw std::invalid_argument("condition: edge_video dims mismatch");
            break;
        }
    }
}

}  // namespace

std::vector<float> assemble_model_input(const ArchitectureDescriptor& desc,
                                        const VideoTensor& noisy, const ConditionSpec& cond) {
    if (!(noisy.shape == desc.input_shape))
        throw std::invalid_argument("predict: sample shape does not match the descriptor");
    validate_condition_aux(desc, cond);
    if (desc.family == NetFamily::kMlp) return noisy.data;

    int total_c = desc.input_channels();
    std::vector<float> input(static_cast<size_t>(desc.input_shape.frames) * total_c *
                             desc.input_shape.height * desc.input_shape.width);
    to_internal(noisy, input.data(), 0, total_c);
    int c0 = desc.input_shape.channels;
    if (desc.cond_mode == CondMode::kFirstFrame) {
        VideoTensor rep = make_first_frame_condition(*cond.first_frame, desc.input_shape.frames);
        to_internal(rep, input.data(), c0, total_c);
    } else if (desc.cond_mode == CondMode::kEdge) {
        to_internal(*cond.edge_video, input.data(), c0, total_c);
    }
    return input;
}

namespace {

// Inverse of to_internal for the data channels.
std::vector<float> from_internal(const ArchitectureDescriptor& desc,
                                 const std::vector<float>& out_internal) {
    const auto& s = desc.input_shape;
    if (desc.family == NetFamily::kMlp) return out_internal;
    std::vector<float> out(static_cast<size_t>(s.num_elements()));
    for (int f = 0; f < s.frames; ++f)
        for (int c = 0; c < s.channels; ++c)
            for (int y = 0; y < s.height; ++y)
                for (int x = 0; x < s.width; ++x)
                    out[((static_cast<int64_t>(f) * s.height + y) * s.width + x) * s.channels + c] =
                        out_internal[((static_cast<int64_t>(f) * s.channels + c) * s.height + y) *
                                     s.width + x];
    return out;
}

}  // namespace

std::vector<float> predict_eps(const DenoiserCheckpoint& ckpt, const NoisySample& sample,
                               const ConditionSpec& cond) {
    const auto& desc = ckpt.descriptor;
    std::vector<float> input = assemble_model_input(desc, sample.tensor, cond);
    int row = condition_label_row(desc, cond);
    std::vector<float> out(static_cast<size_t>(desc.input_shape.num_elements()));
    NetEval<float> net{desc, ckpt.params};
    net.predict(input, sample.step, row, out);
    return from_internal(desc, out);
}

std::vector<double> predict_eps_f64(const DenoiserCheckpoint& ckpt,
                                    const std::vector<double>& flat_input, int t,
                                    const ConditionSpec& cond) {
    const auto& desc = ckpt.descriptor;
    if (desc.family != NetFamily::kMlp)
        throw std::invalid_argument("predict_eps_f64: float64 path covers the flat family");
    if (static_cast<int>(flat_input.size()) != desc.input_shape.num_elements())
        throw std::invalid_argument("predict_eps_f64: input dimension mismatch");
    std::vector<double> params(ckpt.params.begin(), ckpt.params.end());
    std::vector<double> out(flat_input.size());
    NetEval<double> net{desc, params};
    net.predict(flat_input, t, condition_label_row(desc, cond), out);
    return out;
}

double predict_energy_f64(const DenoiserCheckpoint& ckpt, const std::vector<double>& flat_input,
                          int t, const ConditionSpec& cond) {
    const auto& desc = ckpt.descriptor;
    std::vector<double> params(ckpt.params.begin(), ckpt.params.end());
    NetEval<double> net{desc, params};
    return net.energy(flat_input, t, condition_label_row(desc, cond));
}

ConditionSpec condition_from_record(const DatasetRecord& rec, CondMode mode, bool null_label) {
    ConditionSpec cond;
    if (null_label)
        cond.is_null = true;
    else
        cond.label_id = rec.label_id;
    if (mode == CondMode::kFirstFrame) {
        if (!rec.first_frame)
            throw std::invalid_argument("dataset record lacks the first-frame condition");
        cond.first_frame = *rec.first_frame;
    } else if (mode == CondMode::kEdge) {
        if (!rec.edge_video) throw std::invalid_argument("dataset record lacks the edge condition");
        cond.edge_video = *rec.edge_video;
    }
    return cond;
}

TrainResult train_denoiser(const DenoiserCheckpoint& ckpt, const Dataset& dataset,
                           const TrainConfig& cfg, const NoiseSchedule& sched) {
    cfg.validate();
    if (dataset.records.empty()) throw std::invalid_argument("train: dataset is empty");
    if (!(summarize(sched) == ckpt.schedule))
        throw std::invalid_argument("train: schedule does not match the checkpoint summary");
    const auto& desc = ckpt.descriptor;

    TrainResult result;
    result.checkpoint = ckpt;
    auto& params = result.checkpoint.params;
    std::vector<float> grads(params.size());
    int dim = desc.input_shape.num_elements();

    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(grads.begin(), grads.end(), 0.0f);
        double loss_acc = 0.0;
        uint64_t step_seed = derive_seed(cfg.seed, static_cast<uint64_t>(step));
        for (int i = 0; i < cfg.batch_size; ++i) {
            uint64_t key = (static_cast<uint64_t>(step) << 20) | static_cast<uint64_t>(i);
            RngStream pick(cfg.seed, purpose::kBatchSelect, key);
            size_t rec_idx = pick.uniform_int(dataset.records.size());
            const DatasetRecord& rec = dataset.records[rec_idx];

            bool drop = false;
            if (cfg.cond_dropout > 0.0) {
                RngStream drop_rng(cfg.seed, purpose::kCondDropout, key);
                drop = drop_rng.uniform() < cfg.cond_dropout;
            }
            ConditionSpec cond = condition_from_record(rec, desc.cond_mode, drop);

            auto [t, eps] = draw_loss_noise(step_seed, static_cast<uint64_t>(i), sched.num_steps,
                                            dim);
            NoisySample noisy = forward_noise(rec.video, t, eps, sched);
            std::vector<float> input = assemble_model_input(desc, noisy.tensor, cond);
            int row = condition_label_row(desc, cond);

            // conv targets live in the internal channel layout
            std::vector<float> target;
            if (desc.family == NetFamily::kConv) {
                const auto& s = desc.input_shape;
                target.resize(eps.size());
                for (int f = 0; f < s.frames; ++f)
                    for (int y = 0; y < s.height; ++y)
                        for (int x = 0; x < s.width; ++x)
                            for (int ch = 0; ch < s.channels; ++ch)
                                target[((static_cast<int64_t>(f) * s.channels + ch) * s.height + y) *
                                       s.width + x] =
                                    eps[((static_cast<int64_t>(f) * s.height + y) * s.width + x) *
                                            s.channels + ch];
            } else {
                target = eps;
            }

            NetEval<float> net{desc, params};
            loss_acc += static_cast<double>(net.loss_and_grad(input, t, row, target, grads));
        }
        double loss = loss_acc / cfg.batch_size;
        if (!std::isfinite(loss))
            throw std::runtime_error("train: loss diverged (non-finite) at step " +
                                     std::to_string(step));
        result.loss_curve.push_back(loss);

        double norm_sq = 0.0;
        for (float g : grads) norm_sq += static_cast<double>(g) * g;
        double norm = std::sqrt(norm_sq) / cfg.batch_size;
        double scale = 1.0 / cfg.batch_size;
        if (norm > cfg.grad_clip) scale *= cfg.grad_clip / norm;
        float lr_scale = static_cast<float>(cfg.learning_rate * scale);
        for (size_t p = 0; p < params.size(); ++p) params[p] -= lr_scale * grads[p];
    }

    result.checkpoint.meta.steps_trained += cfg.steps;
    result.checkpoint.meta.cond_dropout = cfg.cond_dropout;
    if (!dataset.spec_echo.empty()) result.checkpoint.meta.dataset_id = dataset.spec_echo;
    return result;
}

}  // namespace vad
