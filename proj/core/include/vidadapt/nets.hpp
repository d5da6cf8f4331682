#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vidadapt/tensor.hpp"

namespace vad {

enum class NetFamily { kMlp, kConv };
enum class CondMode { kNone, kFirstFrame, kEdge };

// Fully determines the parameter blob: families are a time-embedded residual
// MLP for flat domains and a small residual conv stack (spatial 3x3 + depth-3
// temporal mixing) for grid video. Label conditioning uses a learned
// embedding table with one extra learned row for the null (unconditional)
// branch.
struct ArchitectureDescriptor {
    NetFamily family = NetFamily::kMlp;
    VideoShape input_shape{1, 1, 2, 1};
    int hidden = 32;
    int blocks = 1;
    int time_embed_dim = 8;  // even; 0 disables time/label embeddings
    int vocab_size = 1;
    CondMode cond_mode = CondMode::kNone;
    bool energy_parameterized = false;

    void validate() const;
    int64_t param_count() const;
    int input_channels() const;  // data channels plus aux condition channels
    bool operator==(const ArchitectureDescriptor&) const = default;
};

// Parameter blob layout, in documented order. Initialization draws
// N(0, init_scale^2) per entry: weights fan-in scaled (1/sqrt(fan_in)),
// biases at 0.01, embedding rows at 0.1.
struct ParamSegment {
    std::string name;
    int64_t offset = 0;
    int64_t size = 0;
    double init_scale = 0.0;
};
std::vector<ParamSegment> param_segments(const ArchitectureDescriptor& desc);

// Evaluation and gradients over a raw parameter blob. `x` is the assembled
// model input: the flat vector for the MLP family, or the conv input in
// (frames, channels, height, width) order with any condition channels
// appended after the data channels. `label_row` indexes the embedding table
// (vocab_size selects the null row).
template <typename Scalar>
struct NetEval {
    const ArchitectureDescriptor& desc;
    std::span<const Scalar> params;

    // eps prediction; for energy-parameterized descriptors this is the exact
    // input gradient of the scalar energy head.
    void predict(std::span<const Scalar> x, int t, int label_row, std::span<Scalar> out) const;

    // scalar energy (energy-parameterized descriptors only)
    Scalar energy(std::span<const Scalar> x, int t, int label_row) const;

    // Accumulates d||target - eps_hat||^2 / dparams into param_grads and
    // returns the squared error. Standard (non-energy) parameterization only.
    Scalar loss_and_grad(std::span<const Scalar> x, int t, int label_row,
                         std::span<const Scalar> target, std::span<Scalar> param_grads) const;
};

extern template struct NetEval<float>;
extern template struct NetEval<double>;

}  // namespace vad
