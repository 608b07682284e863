#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "klassify/frames.hpp"
#include "klassify/landmarks.hpp"
#include "klassify/segments.hpp"

namespace klassify {

// Desk-scale synthetic corpus. Each fake-segment effect targets one
// handcrafted feature: ROI Gaussian blur -> Laplacian variance, non-mouth
// freezing -> inter-frame MSE, drifting ROI tint -> Lab shift, motion
// smoothing / jitter injection -> landmark kinematics.
struct SynthSpec {
  int clips = 2000;
  int t_min = 64;
  int t_max = 160;
  int width = 64;
  int height = 64;
  double fps = 25.0;
  int segments_min = 0;
  int segments_max = 5;
  double duration_min_s = 0.08;
  double duration_max_s = 0.58;  // uniform draw, mean 0.33 s
  double blur_sigma = 1.4;
  double jitter_amplitude = 6e-3;
  double smooth_tremor = 5e-5;
  std::uint64_t seed = 0;
};

struct SynthClip {
  std::string id;
  LandmarkSequence landmarks;
  FrameTensorStream frames;
  SegmentSet segments;  // ground truth, frame-aligned
  int label = 0;
};

// lips are indices 0..7 of the 24-point synthetic face
LipConfig synth_lip_config();

SynthClip generate_clip(const SynthSpec& spec, int index);

// Writes clips/<id>.landmarks.jsonl + clips/<id>.rgb24, lip_config.json,
// manifest.json and truth.json under out_dir. Byte-identical for a fixed
// spec.
void write_synth_corpus(const SynthSpec& spec, const std::string& out_dir);

SynthSpec read_synth_spec(const std::string& path);

}  // namespace klassify
