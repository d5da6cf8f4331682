#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidadapt/tensor.hpp"

namespace vad {

// Diagonal-covariance Gaussian mixture. Oracle-friendly stand-in for both
// the broad prior and the adapted model on low-dimensional domains.
struct GMMSpec {
    std::vector<std::vector<double>> means;
    std::vector<std::vector<double>> variances;  // diagonal, > 0
    std::vector<double> weights;                 // sum to 1 within 1e-12

    int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
    void validate() const;
};

// n i.i.d. draws, row-major n x dim, deterministic per seed.
std::vector<double> gen_gmm_samples(const GMMSpec& spec, int n, uint64_t seed);

enum class Dynamics { kStatic, kBounce, kDrift };
enum class ShapeKind { kSquare, kPlus, kDiamond };
enum class Texture { kSolid, kChecker };

struct RenderParams {
    ShapeKind shape = ShapeKind::kSquare;
    int polarity = 1;  // +1: bright shape on dark field, -1: inverted
    Texture texture = Texture::kSolid;
};

// Styles are a small fixed vocabulary; the id doubles as the training label.
// The mapping id -> render parameters is deterministic.
RenderParams style_render_params(int style_id);
int style_vocab_size();

struct ToyVideoSpec {
    int grid = 16;    // height == width
    int frames = 8;
    Dynamics dynamics = Dynamics::kBounce;
    int style_id = 0;
    RenderParams render;
    int count = 0;
    uint64_t seed = 0;
    bool attach_first_frame = false;
    bool attach_edges = false;

    void validate() const;
    std::string echo() const;  // key=value echo stored in dataset headers
};

struct DatasetRecord {
    VideoTensor video;
    int label_id = 0;
    std::optional<VideoTensor> first_frame;
    std::optional<VideoTensor> edge_video;
};

struct Dataset {
    std::string spec_echo;
    VideoShape shape;
    bool has_first_frame = false;
    bool has_edges = false;
    std::vector<DatasetRecord> records;
};

// Renders clips of a moving hard-edged shape; labels are the style id.
// Motion state (sub-pixel start position, velocity) is drawn per record from
// streams keyed by (seed, record index), so regeneration is byte-identical.
Dataset gen_toy_videos(const ToyVideoSpec& spec);

struct CorpusSplit {
    Dataset pretrain;
    Dataset adapt_train;
    Dataset adapt_test;
};

// Pretrain set is the union of the broad specs (must jointly cover every
// style id); the adaptation corpus is shuffled and split 90/10.
CorpusSplit split_corpora(const std::vector<ToyVideoSpec>& broad_specs,
                          const ToyVideoSpec& adapt_spec);

// Dataset file I/O: magic "VADD", version u32, header length u32, key=value
// header text, then records as little-endian float32 blobs.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace vad
