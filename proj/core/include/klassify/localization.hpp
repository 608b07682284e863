#pragma once

#include <vector>

#include "klassify/nn.hpp"
#include "klassify/segments.hpp"

namespace klassify {

inline constexpr int kWindowFrames = 256;
inline constexpr int kWindowStride = 128;

struct WindowPlan {
  std::vector<int> starts;
  int window = kWindowFrames;
  int total_frames = 0;
};

// starts 0, 128, ... while start+window <= T; a final right-aligned window
// at max(0, T-window) covers the tail; T <= window gives the single [0, T).
WindowPlan plan_windows(int total_frames, int window = kWindowFrames, int stride = kWindowStride);

// arithmetic mean of per-window classification scores
double aggregate_classification(const std::vector<double>& window_scores);

// Per-frame average of tag probabilities over all covering windows,
// renormalized per frame. window_probs[i] covers plan.starts[i].
nn::Tensor aggregate_frame_probs(const std::vector<nn::Tensor>& window_probs, const WindowPlan& plan);

// Per-frame argmax tags decoded into scored segments. Maximal runs matching
// B(I*)(L?) or a lone B close a segment; orphan I/L frames extend an
// immediately preceding segment, otherwise become length-1 segments.
// Segment score = mean of (1 - P(O)) over its frames.
SegmentSet decode_tags(const nn::Tensor& frame_probs, double fps);

}  // namespace klassify
