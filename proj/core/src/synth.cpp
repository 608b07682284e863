#include "klassify/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "klassify/features.hpp"
#include "klassify/rng.hpp"

namespace klassify {

LipConfig synth_lip_config() {
  LipConfig cfg;
  cfg.lips = {0, 1, 2, 3, 4, 5, 6, 7};
  cfg.top = 0;
  cfg.bottom = 1;
  cfg.left = 2;
  cfg.right = 3;
  return cfg;
}

namespace {

constexpr int kFacePoints = 24;

// pure hash noise in [-amp, amp], stable across runs
double hash_noise(std::uint64_t key, std::uint64_t salt, double amp) {
  const std::uint64_t h = mix_seed(key, salt, 0x6e6f697365ull);
  return amp * (2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0);
}

std::uint8_t clamp_px(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)); }

struct SegmentPlan {
  int first = 0;
  int last = 0;      // inclusive frame range
  bool smooth = false;  // motion smoothing vs jitter injection
};

std::vector<SegmentPlan> plan_segments(const SynthSpec& spec, Rng& rng, int t_len) {
  const int want = static_cast<int>(rng.uniform_int(spec.segments_min, spec.segments_max));
  std::vector<SegmentPlan> plans;
  for (int k = 0; k < want; ++k) {
    const double dur_s = rng.uniform(spec.duration_min_s, spec.duration_max_s);
    const int len = std::max(1, static_cast<int>(std::lround(dur_s * spec.fps)));
    if (len + 2 >= t_len) continue;
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      const int first = static_cast<int>(rng.uniform_int(0, t_len - len));
      const int last = first + len - 1;
      bool clash = false;
      for (const SegmentPlan& p : plans)
        if (first <= p.last + 2 && last >= p.first - 2) clash = true;  // keep >= 2 real frames between
      if (!clash) {
        plans.push_back({first, last, rng.bernoulli(0.5)});
        placed = true;
      }
    }
  }
  std::sort(plans.begin(), plans.end(), [](const SegmentPlan& a, const SegmentPlan& b) { return a.first < b.first; });
  return plans;
}

// separable Gaussian blur restricted to the ROI, clamped at its borders
void blur_roi(FrameTensorStream& frames, int t, const MouthRoi& roi, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (double& v : kernel) v /= ksum;

  const int rh = roi.height(), rw = roi.width();
  std::vector<double> tmp(static_cast<std::size_t>(rh) * rw * 3);
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sx = std::clamp(x + i, 0, rw - 1);
          acc += kernel[i + radius] * frames.pixel(t, roi.y0 + y, roi.x0 + sx, c);
        }
        tmp[(static_cast<std::size_t>(y) * rw + x) * 3 + c] = acc;
      }
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sy = std::clamp(y + i, 0, rh - 1);
          acc += kernel[i + radius] * tmp[(static_cast<std::size_t>(sy) * rw + x) * 3 + c];
        }
        frames.pixel(t, roi.y0 + y, roi.x0 + x, c) = clamp_px(acc);
      }
}

}  // namespace

SynthClip generate_clip(const SynthSpec& spec, int index) {
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index), 0x636c6970ull));
  const std::uint64_t pixel_key = mix_seed(spec.seed, static_cast<std::uint64_t>(index), 0x706978ull);

  SynthClip clip;
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "clip_%05d", index);
  clip.id = idbuf;

  const int t_len = static_cast<int>(rng.uniform_int(spec.t_min, spec.t_max));
  const std::vector<SegmentPlan> plans = plan_segments(spec, rng, t_len);
  clip.label = plans.empty() ? 0 : 1;
  for (const SegmentPlan& p : plans)
    clip.segments.push_back({p.first / spec.fps, (p.last + 1) / spec.fps, 1.0});

  auto plan_at = [&](int t) -> const SegmentPlan* {
    for (const SegmentPlan& p : plans)
      if (t >= p.first && t <= p.last) return &p;
    return nullptr;
  };

  // mouth trajectory parameters
  const double cx = 0.5 + rng.uniform(-0.03, 0.03);
  const double cy = 0.60 + rng.uniform(-0.03, 0.03);
  const double mouth_w = 0.17 + rng.uniform(-0.02, 0.02);
  const double speak_hz = rng.uniform(2.0, 3.5);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double tremor = 8e-4;

  auto natural_opening = [&](int t) {
    return 0.025 + 0.02 * 0.5 * (1.0 + std::sin(2.0 * M_PI * speak_hz * t / spec.fps + phase));
  };

  // opening per frame; within smoothed fake segments the curve is replaced
  // by the chord between the segment end points
  std::vector<double> opening(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) opening[t] = natural_opening(t);
  for (const SegmentPlan& p : plans) {
    if (!p.smooth) continue;
    const double o0 = natural_opening(p.first);
    const double o1 = natural_opening(p.last);
    const int span = std::max(1, p.last - p.first);
    for (int t = p.first; t <= p.last; ++t)
      opening[t] = o0 + (o1 - o0) * (t - p.first) / span;
  }

  // base positions of the 16 non-lip points
  std::vector<Point2> face_base(kFacePoints);
  for (int i = 8; i < kFacePoints; ++i)
    face_base[i] = {0.3 + 0.4 * rng.uniform(), 0.15 + 0.4 * rng.uniform()};

  clip.landmarks.fps = spec.fps;
  for (int t = 0; t < t_len; ++t) {
    const SegmentPlan* plan = plan_at(t);
    double sigma_lm = tremor;
    if (plan != nullptr) sigma_lm = plan->smooth ? spec.smooth_tremor : spec.jitter_amplitude;

    LandmarkFrame f;
    f.frame_index = t;
    f.width = spec.width;
    f.height = spec.height;
    f.points.resize(kFacePoints);
    const double o = opening[t];
    f.points[0] = {cx, cy - o / 2.0};
    f.points[1] = {cx, cy + o / 2.0};
    f.points[2] = {cx - mouth_w / 2.0, cy};
    f.points[3] = {cx + mouth_w / 2.0, cy};
    f.points[4] = {cx - mouth_w / 4.0, cy - o / 3.0};
    f.points[5] = {cx + mouth_w / 4.0, cy - o / 3.0};
    f.points[6] = {cx - mouth_w / 4.0, cy + o / 3.0};
    f.points[7] = {cx + mouth_w / 4.0, cy + o / 3.0};
    for (int i = 0; i < 8; ++i) {
      f.points[i].x += rng.normal(0.0, sigma_lm);
      f.points[i].y += rng.normal(0.0, sigma_lm);
    }
    for (int i = 8; i < kFacePoints; ++i) {
      f.points[i] = {face_base[i].x + rng.normal(0.0, tremor), face_base[i].y + rng.normal(0.0, tremor)};
    }
    for (Point2& p : f.points) {
      p.x = std::clamp(p.x, 0.0, 1.0);
      p.y = std::clamp(p.y, 0.0, 1.0);
    }
    clip.landmarks.frames.push_back(std::move(f));
  }

  // frames
  clip.frames.t = t_len;
  clip.frames.w = spec.width;
  clip.frames.h = spec.height;
  clip.frames.data.assign(static_cast<std::size_t>(t_len) * spec.width * spec.height * 3, 0);

  const LipConfig lips = synth_lip_config();
  const double flicker_phase = rng.uniform(0.0, 2.0 * M_PI);

  for (int t = 0; t < t_len; ++t) {
    const SegmentPlan* plan = plan_at(t);
    const MouthRoi roi = make_mouth_roi(clip.landmarks.frames[t], lips, 0.2, spec.width, spec.height);

    const double flicker = 5.0 * std::sin(2.0 * M_PI * 0.9 * t / spec.fps + flicker_phase);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const bool in_roi = y >= roi.y0 && y < roi.y1 && x >= roi.x0 && x < roi.x1;
        const std::uint64_t px_key = (static_cast<std::uint64_t>(t) << 24) ^ (static_cast<std::uint64_t>(y) << 12) ^
                                     static_cast<std::uint64_t>(x);
        if (in_roi) {
          // sharp skin texture, refreshed every frame
          const double base_r = 185.0, base_g = 125.0, base_b = 110.0;
          double tint = 0.0;
          if (plan != nullptr) {
            const double progress = static_cast<double>(t - plan->first) / std::max(1, plan->last - plan->first + 1);
            tint = 28.0 * std::sin(M_PI * progress);
          }
          clip.frames.pixel(t, y, x, 0) = clamp_px(base_r + tint + hash_noise(pixel_key, px_key * 3 + 0, 45.0));
          clip.frames.pixel(t, y, x, 1) = clamp_px(base_g + hash_noise(pixel_key, px_key * 3 + 1, 45.0));
          clip.frames.pixel(t, y, x, 2) = clamp_px(base_b + hash_noise(pixel_key, px_key * 3 + 2, 45.0));
        } else if (plan != nullptr && t > 0) {
          // frozen background inside fake segments
          for (int c = 0; c < 3; ++c) clip.frames.pixel(t, y, x, c) = clip.frames.pixel(t - 1, y, x, c);
        } else {
          const double base = 90.0 + 50.0 * std::sin(2.0 * M_PI * x / spec.width) * std::cos(2.0 * M_PI * y / spec.height);
          for (int c = 0; c < 3; ++c)
            clip.frames.pixel(t, y, x, c) =
                clamp_px(base + 20.0 * c + flicker + hash_noise(pixel_key, px_key * 3 + c, 3.0));
        }
      }
    }
    if (plan != nullptr) blur_roi(clip.frames, t, roi, spec.blur_sigma);
  }
  return clip;
}

void write_synth_corpus(const SynthSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "clips");
  write_lip_config((fs::path(out_dir) / "lip_config.json").string(), synth_lip_config());

  nlohmann::json manifest = nlohmann::json::array();
  nlohmann::json truth = nlohmann::json::object();
  for (int i = 0; i < spec.clips; ++i) {
    const SynthClip clip = generate_clip(spec, i);
    const std::string lm_rel = "clips/" + clip.id + ".landmarks.jsonl";
    const std::string px_rel = "clips/" + clip.id + ".rgb24";
    write_landmarks_jsonl((fs::path(out_dir) / lm_rel).string(), clip.landmarks);
    write_raw_rgb24_file((fs::path(out_dir) / px_rel).string(), clip.frames);

    nlohmann::json entry;
    entry["id"] = clip.id;
    entry["landmarks"] = lm_rel;
    entry["frames"] = px_rel;
    entry["width"] = clip.frames.w;
    entry["height"] = clip.frames.h;
    entry["fps"] = spec.fps;
    entry["label"] = clip.label;
    nlohmann::json segs = nlohmann::json::array();
    for (const Segment& s : clip.segments) segs.push_back({s.start, s.end});
    entry["segments"] = segs;
    manifest.push_back(entry);
    truth[clip.id] = segs;
  }
  std::ofstream mo(fs::path(out_dir) / "manifest.json");
  mo << manifest.dump(1) << "\n";
  std::ofstream to(fs::path(out_dir) / "truth.json");
  to << truth.dump(1) << "\n";
}

SynthSpec read_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) raise(Errc::BadFormat, path + ": synth spec must be a JSON object");
  SynthSpec spec;
  if (j.contains("clips")) spec.clips = j["clips"].get<int>();
  if (j.contains("t_min")) spec.t_min = j["t_min"].get<int>();
  if (j.contains("t_max")) spec.t_max = j["t_max"].get<int>();
  if (j.contains("width")) spec.width = j["width"].get<int>();
  if (j.contains("height")) spec.height = j["height"].get<int>();
  if (j.contains("fps")) spec.fps = j["fps"].get<double>();
  if (j.contains("segments_min")) spec.segments_min = j["segments_min"].get<int>();
  if (j.contains("segments_max")) spec.segments_max = j["segments_max"].get<int>();
  if (j.contains("duration_min_s")) spec.duration_min_s = j["duration_min_s"].get<double>();
  if (j.contains("duration_max_s")) spec.duration_max_s = j["duration_max_s"].get<double>();
  if (j.contains("blur_sigma")) spec.blur_sigma = j["blur_sigma"].get<double>();
  if (j.contains("jitter_amplitude")) spec.jitter_amplitude = j["jitter_amplitude"].get<double>();
  if (j.contains("smooth_tremor")) spec.smooth_tremor = j["smooth_tremor"].get<double>();
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  if (spec.segments_min < 0 || spec.segments_max > 5 || spec.segments_min > spec.segments_max)
    raise(Errc::BadFormat, path + ": segment count range must lie in [0, 5]");
  if (spec.duration_min_s <= 0.0 || spec.duration_max_s < spec.duration_min_s)
    raise(Errc::BadFormat, path + ": segment durations must be positive");
  return spec;
}

}  // namespace klassify
