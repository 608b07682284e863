#pragma once

#include <string>
#include <vector>

#include "klassify/errors.hpp"

namespace klassify {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// One frame of facial landmarks in normalized [0,1] image coordinates.
struct LandmarkFrame {
  int frame_index = 0;
  int width = 0;
  int height = 0;
  std::vector<Point2> points;
};

struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;
  double fps = 25.0;

  int size() const { return static_cast<int>(frames.size()); }

  // frame_index contiguous from 0, constant point count, finite coords
  void validate() const;
};

// Lip landmark index sets. `lips` drives the ROI bounding box and the
// kinematic features; the four named indices define the mouth aspect ratio.
struct LipConfig {
  std::vector<int> lips;
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  int max_index() const;
};

// JSON-lines, one object per frame:
//   {"frame": int, "w": int, "h": int, "pts": [[x,y], ...]}
LandmarkSequence read_landmarks_jsonl(const std::string& path, double fps);
void write_landmarks_jsonl(const std::string& path, const LandmarkSequence& seq);

LipConfig read_lip_config(const std::string& path);
void write_lip_config(const std::string& path, const LipConfig& cfg);

}  // namespace klassify
