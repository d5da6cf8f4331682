#pragma once

#include "vidadapt/tensor.hpp"

namespace vad {

// Replicates a single frame across H frame slots; concatenated channel-wise
// with the noisy input at model call time, doubling the effective input
// channel count.
VideoTensor make_first_frame_condition(const VideoTensor& frame, int frames);

// Per-frame correlation with the 3x3 horizontal kernel
// [[-1,0,1],[-2,0,2],[-1,0,1]], replicate-padded borders. Raw response on a
// unit x-ramp is 8 at every interior pixel.
VideoTensor sobel_raw(const VideoTensor& video);

// sobel_raw followed by a per-frame rescale into [-1,1] (all-zero frames
// stay zero).
VideoTensor sobel_edges(const VideoTensor& video);

}  // namespace vad
