#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidadapt/adapter.hpp"
#include "vidadapt/denoiser.hpp"
#include "vidadapt/eval.hpp"
#include "vidadapt/worlds.hpp"

namespace vad {

// Run configuration: named sections of key = value lines, '#' comments.
// Parsing is strict: unknown sections or keys are rejected, duplicated keys
// report both line numbers, and every default is echoed back on
// serialization so artifacts are self-describing. Precedence elsewhere is
// flags > config > defaults.
struct ModelSection {
    NetFamily family = NetFamily::kConv;
    int hidden = 8;
    int blocks = 1;
    int time_embed_dim = 16;
    int vocab_size = 4;
    CondMode cond_mode = CondMode::kNone;
    bool energy = false;
};

struct DataSection {
    int grid = 16;
    int frames = 8;
    std::string dynamics = "bounce";
    std::vector<int> broad_styles{0, 1, 2, 3};
    int broad_count_per_style = 192;
    int adapt_style = 2;
    int adapt_count = 512;
    uint64_t data_seed = 77;
    bool attach_first_frame = false;
    bool attach_edges = false;
};

struct TrainSection {
    int steps = 400;
    int batch_size = 8;
    double learning_rate = 1e-4;
    double cond_dropout = 0.1;
    double grad_clip = 1.0;
};

struct BenchmarkSection {
    int num_samples = 192;
    std::vector<uint64_t> seeds{1, 2, 3};
    uint64_t probe_seed = 0x9A0B;
    int probe_kernels = 8;
    std::vector<std::string> rows{"adapter_only", "pretrained_only", "composed", "cfg_mix",
                                  "finetune"};
    int threads = 2;
    double cfg_mix_weight = 0.5;
    std::string pretrain_data;     // optional dataset paths; empty regenerates
    std::string adapt_train_data;
    std::string adapt_test_data;
};

struct ServeSection {
    std::string host = "127.0.0.1";
    int port = 7077;
    double timeout_seconds = 30.0;
};

struct RunConfig {
    uint64_t seed = 1;
    std::string out_dir = "out";

    ScheduleSummary schedule{64, -20.0, 20.0};
    ModelSection pretrained_model{NetFamily::kConv, 10, 2, 16, 4, CondMode::kNone, false};
    ModelSection adapter_model{NetFamily::kConv, 4, 1, 16, 4, CondMode::kNone, false};
    DataSection data;
    TrainSection train_pretrained{900, 8, 2e-3, 0.1, 1.0};
    TrainSection train_adapter{600, 8, 2e-3, 0.1, 1.0};
    CompositionConfig composition;
    BenchmarkSection benchmark;
    ServeSection serve;

    std::string serialize() const;

    // Derived domain objects.
    ArchitectureDescriptor pretrained_descriptor() const;
    ArchitectureDescriptor adapter_descriptor() const;
    std::vector<ToyVideoSpec> broad_specs() const;
    ToyVideoSpec adapt_spec() const;
    BenchmarkPlan benchmark_plan() const;
    TrainConfig pretrain_train_config() const;
    TrainConfig adapter_train_config() const;
};

// Strict parse; errors carry the offending line number. An empty file is the
// all-defaults configuration.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

}  // namespace vad
