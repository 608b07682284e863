#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "klassify/frames.hpp"
#include "klassify/landmarks.hpp"

namespace klassify {

inline constexpr int kFeatureChannels = 16;

// Channel layout of the model input. Channels 8..15 are the first-order
// differences of channels 0..7 (difference at frame 0 is defined as 0).
enum FeatureChannel {
  kBlur = 0,
  kNonMouthMse = 1,
  kColorShift = 2,
  kMar = 3,
  kVelocity = 4,
  kAcceleration = 5,
  kJerk = 6,
  kJitter = 7,
};

// T x 16 feature matrix, row-major.
struct FeatureSequence {
  int t = 0;
  double fps = 25.0;
  std::vector<double> values;  // t * kFeatureChannels

  double at(int frame, int channel) const { return values[static_cast<std::size_t>(frame) * kFeatureChannels + channel]; }
  double& at(int frame, int channel) { return values[static_cast<std::size_t>(frame) * kFeatureChannels + channel]; }
};

struct ChannelStats {
  std::array<double, kFeatureChannels> mean{};
  std::array<double, kFeatureChannels> stddev{};  // floored at 1e-6 when applied
};

// Per-frame mouth box in pixel coordinates, [x0,x1) x [y0,y1).
struct MouthRoi {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

struct FeatureConfig {
  LipConfig lips;
  double roi_margin = 0.2;  // box expansion per side, fraction of box extent
};

// Small grayscale matrix used by the blur measure.
struct GrayImage {
  int h = 0, w = 0;
  std::vector<double> v;  // values in [0,255]

  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
};

// ITU-R BT.601 luma, rounded to the nearest integer gray level.
double gray_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Lip bounding box expanded by `margin` per side, clamped to the frame and
// widened to at least 3 px per axis so the Laplacian stays defined.
MouthRoi make_mouth_roi(const LandmarkFrame& f, const LipConfig& lips, double margin, int w, int h);

// Population variance of the valid 3x3 Laplacian response
// ([[0,1,0],[1,-4,1],[0,1,0]]); low values indicate blur.
double laplacian_blurriness(const GrayImage& roi);

// Mean squared difference (0..255 scale) over all pixels outside the ROI.
double non_mouth_mse(const FrameTensorStream& s, int frame_t, int frame_prev, const MouthRoi& roi);

// Mean per-pixel Euclidean distance in CIELAB between the two mouth ROIs.
// ROIs of different shapes are compared at the smaller shape via
// nearest-neighbor sampling.
double lab_color_shift(const FrameTensorStream& s, int frame_t, const MouthRoi& roi_t, int frame_prev,
                       const MouthRoi& roi_prev);

// sRGB (D65) -> CIELAB
void srgb_to_lab(double r8, double g8, double b8, double& l, double& a, double& b);

struct MarResult {
  double value = 0.0;
  bool degenerate = false;  // mouth width < 1e-9
};

MarResult mouth_aspect_ratio(const LandmarkFrame& f, const LipConfig& lips);

struct KinematicSeries {
  std::vector<double> velocity;
  std::vector<double> acceleration;
  std::vector<double> jerk;
  std::vector<double> jitter;
};

// Velocity is the mean lip-landmark displacement per frame, acceleration and
// jerk its first and second differences, jitter the RMS residual of an OLS
// line fit per coordinate per lip landmark over a centered 5-frame window
// (clamped at the sequence edges).
KinematicSeries kinematics(const LandmarkSequence& seq, const LipConfig& lips, int window = 5);

// Full 8+8 channel assembly. Landmark and frame counts must match.
FeatureSequence extract_features(const LandmarkSequence& landmarks, const FrameTensorStream& frames,
                                 const FeatureConfig& cfg);

ChannelStats fit_stats(const std::vector<FeatureSequence>& corpus);
FeatureSequence apply_stats(const FeatureSequence& f, const ChannelStats& stats);

// KLFT container: magic "KLFT", version u32 LE, T u32, C u32 (=16),
// fps f32, then T*C f32 LE row-major.
void write_klft(const std::string& path, const FeatureSequence& f);
FeatureSequence read_klft(const std::string& path);
void write_features_csv(const std::string& path, const FeatureSequence& f);

}  // namespace klassify
