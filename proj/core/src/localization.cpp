#include "klassify/localization.hpp"

#include <algorithm>

#include "klassify/models.hpp"

namespace klassify {

WindowPlan plan_windows(int total_frames, int window, int stride) {
  if (total_frames < 1) raise(Errc::ShapeMismatch, "plan_windows: need at least one frame");
  WindowPlan plan;
  plan.window = window;
  plan.total_frames = total_frames;
  if (total_frames <= window) {
    plan.starts.push_back(0);
    return plan;
  }
  int start = 0;
  while (start + window <= total_frames) {
    plan.starts.push_back(start);
    start += stride;
  }
  if (plan.starts.back() + window < total_frames) plan.starts.push_back(total_frames - window);
  return plan;
}

double aggregate_classification(const std::vector<double>& window_scores) {
  if (window_scores.empty()) raise(Errc::ShapeMismatch, "aggregate_classification: no window scores");
  double sum = 0.0;
  for (double s : window_scores) sum += s;
  return sum / static_cast<double>(window_scores.size());
}

nn::Tensor aggregate_frame_probs(const std::vector<nn::Tensor>& window_probs, const WindowPlan& plan) {
  if (window_probs.size() != plan.starts.size())
    raise(Errc::ShapeMismatch, "aggregate_frame_probs: window count mismatch");
  const int t_total = plan.total_frames;
  const int k = window_probs.empty() ? 0 : window_probs[0].cols();
  nn::Tensor acc(t_total, k);
  std::vector<int> cover(static_cast<std::size_t>(t_total), 0);
  for (std::size_t i = 0; i < window_probs.size(); ++i) {
    const nn::Tensor& p = window_probs[i];
    const int start = plan.starts[i];
    for (int t = 0; t < p.rows(); ++t) {
      const int ft = start + t;
      if (ft >= t_total) break;
      for (int c = 0; c < k; ++c) acc.at(ft, c) += p.at(t, c);
      ++cover[ft];
    }
  }
  for (int t = 0; t < t_total; ++t) {
    if (cover[t] == 0) raise(Errc::CoverageGap, "frame " + std::to_string(t) + " not covered by any window");
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      acc.at(t, c) /= cover[t];
      sum += acc.at(t, c);
    }
    // guard float drift from the averaging
    for (int c = 0; c < k; ++c) acc.at(t, c) /= sum;
  }
  return acc;
}

SegmentSet decode_tags(const nn::Tensor& frame_probs, double fps) {
  const int t_total = frame_probs.rows();
  std::vector<int> tags(static_cast<std::size_t>(t_total));
  for (int t = 0; t < t_total; ++t) {
    int best = 0;
    for (int c = 1; c < frame_probs.cols(); ++c)
      if (frame_probs.at(t, c) > frame_probs.at(t, best)) best = c;
    tags[t] = best;
  }

  struct FrameRun {
    int first, last;
  };
  std::vector<FrameRun> runs;
  int t = 0;
  while (t < t_total) {
    const int tag = tags[t];
    if (tag == kTagO) {
      ++t;
      continue;
    }
    if (tag == kTagB) {
      const int first = t;
      ++t;
      while (t < t_total && tags[t] == kTagI) ++t;
      if (t < t_total && tags[t] == kTagL) ++t;
      runs.push_back({first, t - 1});
      continue;
    }
    // orphan I or L: extend an immediately preceding run, else length-1
    if (!runs.empty() && runs.back().last == t - 1) {
      runs.back().last = t;
    } else {
      runs.push_back({t, t});
    }
    ++t;
  }

  SegmentSet out;
  for (const FrameRun& r : runs) {
    double score = 0.0;
    for (int f = r.first; f <= r.last; ++f) score += 1.0 - frame_probs.at(f, kTagO);
    score /= r.last - r.first + 1;
    out.push_back({r.first / fps, (r.last + 1) / fps, score});
  }
  return out;
}

}  // namespace klassify
