#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace vad {

struct VideoShape {
    int frames = 0;
    int height = 0;
    int width = 0;
    int channels = 0;

    int num_elements() const { return frames * height * width * channels; }
    bool operator==(const VideoShape&) const = default;
    bool valid() const { return frames > 0 && height > 0 && width > 0 && channels > 0; }
};

// A trajectory of frames, stored frame-major: data[((f*H + y)*W + x)*C + c].
// Dataset values live in [-1,1]; intermediate noisy values are unclamped.
struct VideoTensor {
    VideoShape shape;
    std::vector<float> data;

    VideoTensor() = default;
    explicit VideoTensor(const VideoShape& s) : shape(s), data(s.num_elements(), 0.0f) {}

    float& at(int f, int y, int x, int c) {
        return data[static_cast<size_t>(((f * shape.height + y) * shape.width + x) * shape.channels + c)];
    }
    float at(int f, int y, int x, int c) const {
        return data[static_cast<size_t>(((f * shape.height + y) * shape.width + x) * shape.channels + c)];
    }

    // Flat domains (vectors of dimension d) are carried as 1x1xd x1 videos.
    static VideoTensor flat(const std::vector<float>& values) {
        VideoTensor t;
        t.shape = {1, 1, static_cast<int>(values.size()), 1};
        t.data = values;
        return t;
    }
};

inline void check_shape_consistent(const VideoTensor& t) {
    if (!t.shape.valid() || static_cast<int>(t.data.size()) != t.shape.num_elements())
        throw std::invalid_argument("video tensor data length does not match its shape");
}

struct NoisySample {
    VideoTensor tensor;
    int step = 0;  // t in {0..T}; 0 means clean
};

// Conditioning for a denoiser call. label_id stands in for text; is_null
// selects the unconditional branch (learned null embedding) and excludes
// label_id. first_frame / edge_video feed the auxiliary input channels.
struct ConditionSpec {
    std::optional<int> label_id;
    std::optional<VideoTensor> first_frame;
    std::optional<VideoTensor> edge_video;
    bool is_null = false;

    static ConditionSpec null_cond() {
        ConditionSpec c;
        c.is_null = true;
        return c;
    }
    static ConditionSpec label(int id) {
        ConditionSpec c;
        c.label_id = id;
        return c;
    }
};

}  // namespace vad
