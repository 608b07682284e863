#include "klassify/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace klassify {

double gray_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return std::round(0.299 * r + 0.587 * g + 0.114 * b);
}

MouthRoi make_mouth_roi(const LandmarkFrame& f, const LipConfig& lips, double margin, int w, int h) {
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = max_x;
  for (int idx : lips.lips) {
    const Point2& p = f.points[idx];
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double bw = max_x - min_x;
  const double bh = max_y - min_y;
  min_x -= margin * bw;
  max_x += margin * bw;
  min_y -= margin * bh;
  max_y += margin * bh;

  MouthRoi roi;
  roi.x0 = static_cast<int>(std::floor(min_x * w));
  roi.x1 = static_cast<int>(std::ceil(max_x * w));
  roi.y0 = static_cast<int>(std::floor(min_y * h));
  roi.y1 = static_cast<int>(std::ceil(max_y * h));
  roi.x0 = std::clamp(roi.x0, 0, w);
  roi.x1 = std::clamp(roi.x1, 0, w);
  roi.y0 = std::clamp(roi.y0, 0, h);
  roi.y1 = std::clamp(roi.y1, 0, h);

  // keep at least 3 px per axis, stays inside the frame (w, h >= 16)
  const int min_side = 3;
  if (roi.x1 - roi.x0 < min_side) {
    roi.x1 = std::min(w, roi.x0 + min_side);
    roi.x0 = std::max(0, roi.x1 - min_side);
  }
  if (roi.y1 - roi.y0 < min_side) {
    roi.y1 = std::min(h, roi.y0 + min_side);
    roi.y0 = std::max(0, roi.y1 - min_side);
  }
  return roi;
}

double laplacian_blurriness(const GrayImage& roi) {
  if (roi.h < 3 || roi.w < 3) raise(Errc::RoiTooSmall, "Laplacian needs at least 3x3, got " + std::to_string(roi.h) + "x" + std::to_string(roi.w));
  const int oh = roi.h - 2;
  const int ow = roi.w - 2;
  const int n = oh * ow;
  double sum = 0.0;
  std::vector<double> resp(static_cast<std::size_t>(n));
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const int cy = y + 1, cx = x + 1;
      const double v = roi.at(cy - 1, cx) + roi.at(cy + 1, cx) + roi.at(cy, cx - 1) + roi.at(cy, cx + 1) -
                       4.0 * roi.at(cy, cx);
      resp[static_cast<std::size_t>(y) * ow + x] = v;
      sum += v;
    }
  }
  const double mean = sum / n;
  double var = 0.0;
  for (double v : resp) var += (v - mean) * (v - mean);
  return var / n;
}

double non_mouth_mse(const FrameTensorStream& s, int frame_t, int frame_prev, const MouthRoi& roi) {
  if (frame_prev < 0 || frame_t < 0) return 0.0;  // sequence start, no previous frame
  const int h = s.h, w = s.w;
  const std::uint8_t* a = s.frame(frame_t);
  const std::uint8_t* b = s.frame(frame_prev);
  double acc = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < h; ++y) {
    const bool y_in = y >= roi.y0 && y < roi.y1;
    for (int x = 0; x < w; ++x) {
      if (y_in && x >= roi.x0 && x < roi.x1) continue;
      const std::size_t off = (static_cast<std::size_t>(y) * w + x) * 3;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a[off + c]) - static_cast<double>(b[off + c]);
        acc += d * d;
      }
      count += 3;
    }
  }
  if (count == 0) raise(Errc::EmptyComplement, "mouth ROI covers the whole frame");
  return acc / static_cast<double>(count);
}

namespace {

double srgb_decode(double c8) {
  const double c = c8 / 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  const double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

void srgb_to_lab(double r8, double g8, double b8, double& l, double& a, double& b) {
  const double rl = srgb_decode(r8);
  const double gl = srgb_decode(g8);
  const double bl = srgb_decode(b8);
  // sRGB D65 linear transform
  const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  // D65 white point
  const double xn = 0.95047, yn = 1.0, zn = 1.08883;
  const double fx = lab_f(x / xn);
  const double fy = lab_f(y / yn);
  const double fz = lab_f(z / zn);
  l = 116.0 * fy - 16.0;
  a = 500.0 * (fx - fy);
  b = 200.0 * (fy - fz);
}

double lab_color_shift(const FrameTensorStream& s, int frame_t, const MouthRoi& roi_t, int frame_prev,
                       const MouthRoi& roi_prev) {
  if (frame_prev < 0 || frame_t < 0) return 0.0;  // sequence start, no previous frame
  const int h = std::min(roi_t.height(), roi_prev.height());
  const int w = std::min(roi_t.width(), roi_prev.width());
  if (h <= 0 || w <= 0) raise(Errc::EmptyRoi, "empty mouth ROI");

  auto sample = [&](int frame, const MouthRoi& roi, int y, int x, double out[3]) {
    // nearest-neighbor resample onto the smaller h x w grid
    int sy = roi.y0 + static_cast<int>((static_cast<double>(y) + 0.5) * roi.height() / h);
    int sx = roi.x0 + static_cast<int>((static_cast<double>(x) + 0.5) * roi.width() / w);
    sy = std::min(sy, roi.y1 - 1);
    sx = std::min(sx, roi.x1 - 1);
    srgb_to_lab(s.pixel(frame, sy, sx, 0), s.pixel(frame, sy, sx, 1), s.pixel(frame, sy, sx, 2), out[0], out[1],
                out[2]);
  };

  double acc = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double la[3], lb[3];
      sample(frame_t, roi_t, y, x, la);
      sample(frame_prev, roi_prev, y, x, lb);
      const double d0 = la[0] - lb[0];
      const double d1 = la[1] - lb[1];
      const double d2 = la[2] - lb[2];
      acc += std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
    }
  }
  return acc / (static_cast<double>(h) * w);
}

MarResult mouth_aspect_ratio(const LandmarkFrame& f, const LipConfig& lips) {
  const Point2& top = f.points[lips.top];
  const Point2& bottom = f.points[lips.bottom];
  const Point2& left = f.points[lips.left];
  const Point2& right = f.points[lips.right];
  const double opening = std::hypot(top.x - bottom.x, top.y - bottom.y);
  const double width = std::hypot(left.x - right.x, left.y - right.y);
  if (width < 1e-9) return {0.0, true};
  return {opening / width, false};
}

KinematicSeries kinematics(const LandmarkSequence& seq, const LipConfig& lips, int window) {
  const int t_count = seq.size();
  KinematicSeries out;
  out.velocity.assign(t_count, 0.0);
  out.acceleration.assign(t_count, 0.0);
  out.jerk.assign(t_count, 0.0);
  out.jitter.assign(t_count, 0.0);
  const int n_lips = static_cast<int>(lips.lips.size());

  for (int t = 1; t < t_count; ++t) {
    double d = 0.0;
    for (int idx : lips.lips) {
      const Point2& p = seq.frames[t].points[idx];
      const Point2& q = seq.frames[t - 1].points[idx];
      d += std::hypot(p.x - q.x, p.y - q.y);
    }
    out.velocity[t] = d / n_lips;
  }
  for (int t = 1; t < t_count; ++t) out.acceleration[t] = out.velocity[t] - out.velocity[t - 1];
  // jerk defined 0 at t <= 1
  for (int t = 2; t < t_count; ++t) out.jerk[t] = out.acceleration[t] - out.acceleration[t - 1];

  // jitter: RMS residual of a per-coordinate OLS line fit over a centered
  // window, averaged over lip landmarks and both coordinates
  const int half = window / 2;
  for (int t = 0; t < t_count; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(t_count - 1, t + half);
    const int n = hi - lo + 1;
    if (n < 2) {
      out.jitter[t] = 0.0;
      continue;
    }
    double mean_sq = 0.0;
    for (int idx : lips.lips) {
      for (int coord = 0; coord < 2; ++coord) {
        // OLS fit v = a + b*u over u = lo..hi
        double su = 0.0, sv = 0.0, suu = 0.0, suv = 0.0;
        for (int u = lo; u <= hi; ++u) {
          const Point2& p = seq.frames[u].points[idx];
          const double v = coord == 0 ? p.x : p.y;
          su += u;
          sv += v;
          suu += static_cast<double>(u) * u;
          suv += static_cast<double>(u) * v;
        }
        const double denom = n * suu - su * su;
        double slope = 0.0, intercept = sv / n;
        if (std::abs(denom) > 0.0) {
          slope = (n * suv - su * sv) / denom;
          intercept = (sv - slope * su) / n;
        }
        double rss = 0.0;
        for (int u = lo; u <= hi; ++u) {
          const Point2& p = seq.frames[u].points[idx];
          const double v = coord == 0 ? p.x : p.y;
          const double r = v - (intercept + slope * u);
          rss += r * r;
        }
        mean_sq += rss / n;
      }
    }
    out.jitter[t] = std::sqrt(mean_sq / (2.0 * n_lips));
  }
  return out;
}

namespace {

GrayImage gray_roi(const FrameTensorStream& s, int frame, const MouthRoi& roi) {
  GrayImage g;
  g.h = roi.height();
  g.w = roi.width();
  g.v.resize(static_cast<std::size_t>(g.h) * g.w);
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x)
      g.at(y, x) = gray_bt601(s.pixel(frame, roi.y0 + y, roi.x0 + x, 0), s.pixel(frame, roi.y0 + y, roi.x0 + x, 1),
                              s.pixel(frame, roi.y0 + y, roi.x0 + x, 2));
  return g;
}

}  // namespace

FeatureSequence extract_features(const LandmarkSequence& landmarks, const FrameTensorStream& frames,
                                 const FeatureConfig& cfg) {
  landmarks.validate();
  frames.validate();
  if (landmarks.size() != frames.t)
    raise(Errc::LengthMismatch, "landmark frames (" + std::to_string(landmarks.size()) + ") != pixel frames (" +
                                    std::to_string(frames.t) + ")");
  const int t_count = frames.t;

  FeatureSequence out;
  out.t = t_count;
  out.fps = landmarks.fps;
  out.values.assign(static_cast<std::size_t>(t_count) * kFeatureChannels, 0.0);

  std::vector<MouthRoi> rois(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t)
    rois[t] = make_mouth_roi(landmarks.frames[t], cfg.lips, cfg.roi_margin, frames.w, frames.h);

  const KinematicSeries kin = kinematics(landmarks, cfg.lips);

  for (int t = 0; t < t_count; ++t) {
    try {
      out.at(t, kBlur) = laplacian_blurriness(gray_roi(frames, t, rois[t]));
      out.at(t, kNonMouthMse) = t == 0 ? 0.0 : non_mouth_mse(frames, t, t - 1, rois[t]);
      out.at(t, kColorShift) = t == 0 ? 0.0 : lab_color_shift(frames, t, rois[t], t - 1, rois[t - 1]);
      out.at(t, kMar) = mouth_aspect_ratio(landmarks.frames[t], cfg.lips).value;
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (frame " + std::to_string(t) + ")");
    }
    out.at(t, kVelocity) = kin.velocity[t];
    out.at(t, kAcceleration) = kin.acceleration[t];
    out.at(t, kJerk) = kin.jerk[t];
    out.at(t, kJitter) = kin.jitter[t];
  }
  for (int t = 0; t < t_count; ++t)
    for (int c = 0; c < 8; ++c) out.at(t, 8 + c) = t == 0 ? 0.0 : out.at(t, c) - out.at(t - 1, c);
  return out;
}

ChannelStats fit_stats(const std::vector<FeatureSequence>& corpus) {
  if (corpus.empty()) raise(Errc::EmptyCorpus, "cannot fit channel stats on an empty corpus");
  ChannelStats stats;
  std::array<double, kFeatureChannels> sum{}, sum_sq{};
  std::int64_t n = 0;
  for (const FeatureSequence& f : corpus) {
    for (int t = 0; t < f.t; ++t)
      for (int c = 0; c < kFeatureChannels; ++c) {
        const double v = f.at(t, c);
        sum[c] += v;
        sum_sq[c] += v * v;
      }
    n += f.t;
  }
  for (int c = 0; c < kFeatureChannels; ++c) {
    stats.mean[c] = sum[c] / n;
    const double var = std::max(0.0, sum_sq[c] / n - stats.mean[c] * stats.mean[c]);
    stats.stddev[c] = std::sqrt(var);
  }
  return stats;
}

FeatureSequence apply_stats(const FeatureSequence& f, const ChannelStats& stats) {
  FeatureSequence out = f;
  for (int t = 0; t < f.t; ++t)
    for (int c = 0; c < kFeatureChannels; ++c)
      out.at(t, c) = (f.at(t, c) - stats.mean[c]) / std::max(stats.stddev[c], 1e-6);
  return out;
}

namespace {

constexpr std::uint32_t kKlftVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) raise(Errc::TruncatedStream, path + ": unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_klft(const std::string& path, const FeatureSequence& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  out.write("KLFT", 4);
  put_u32(out, kKlftVersion);
  put_u32(out, static_cast<std::uint32_t>(f.t));
  put_u32(out, kFeatureChannels);
  const float fps = static_cast<float>(f.fps);
  std::uint32_t fps_bits;
  std::memcpy(&fps_bits, &fps, 4);
  put_u32(out, fps_bits);
  for (double v : f.values) {
    const float fv = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &fv, 4);
    put_u32(out, bits);
  }
  if (!out) raise(Errc::BadFormat, "write failed: " + path);
}

FeatureSequence read_klft(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "KLFT", 4) != 0) raise(Errc::BadFormat, path + ": bad KLFT magic");
  const std::uint32_t version = get_u32(in, path);
  if (version != kKlftVersion) raise(Errc::BadFormat, path + ": unsupported KLFT version " + std::to_string(version));
  const std::uint32_t t = get_u32(in, path);
  const std::uint32_t c = get_u32(in, path);
  if (c != kFeatureChannels) raise(Errc::BadFormat, path + ": expected 16 channels, got " + std::to_string(c));
  if (t == 0) raise(Errc::BadFormat, path + ": empty feature sequence");
  const std::uint32_t fps_bits = get_u32(in, path);
  float fps;
  std::memcpy(&fps, &fps_bits, 4);

  FeatureSequence f;
  f.t = static_cast<int>(t);
  f.fps = fps;
  f.values.resize(static_cast<std::size_t>(t) * c);
  for (double& v : f.values) {
    const std::uint32_t bits = get_u32(in, path);
    float fv;
    std::memcpy(&fv, &bits, 4);
    v = fv;
  }
  char extra;
  if (in.read(&extra, 1)) raise(Errc::BadFormat, path + ": trailing bytes after feature data");
  return f;
}

void write_features_csv(const std::string& path, const FeatureSequence& f) {
  std::ofstream out(path);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  out << "frame,blur,non_mouth_mse,color_shift,mar,velocity,acceleration,jerk,jitter,"
         "d_blur,d_non_mouth_mse,d_color_shift,d_mar,d_velocity,d_acceleration,d_jerk,d_jitter\n";
  char buf[32];
  for (int t = 0; t < f.t; ++t) {
    out << t;
    for (int c = 0; c < kFeatureChannels; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", f.at(t, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace klassify
