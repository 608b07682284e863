#pragma once

#include <array>
#include <string>
#include <vector>

#include "klassify/segments.hpp"

namespace klassify {

// Predicted (scored) and ground-truth segments for one video.
struct EvalPair {
  std::string video_id;
  SegmentSet predictions;
  SegmentSet ground_truth;
};

inline constexpr std::array<double, 4> kScoreApThresholds = {0.5, 0.75, 0.9, 0.95};
inline constexpr std::array<int, 5> kScoreArProposals = {50, 30, 20, 10, 5};

// Mann-Whitney AUC: P(fake > real) + 0.5 * P(tie). Both classes required.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

double temporal_iou(const Segment& a, const Segment& b);

// Predictions pooled over videos, sorted by score (ties: video id, then
// start), each greedily matched to the highest-IoU unmatched ground truth in
// its video at IoU >= threshold; AP is the area under the all-point
// interpolated precision-recall curve.
double ap_at_iou(const std::vector<EvalPair>& pairs, double threshold);

// Top-N predictions per video, recall averaged over IoU 0.5:0.05:0.95, then
// over videos with ground truth. Videos without ground truth are excluded.
double ar_at_n(const std::vector<EvalPair>& pairs, int n);

double challenge_score(const std::vector<EvalPair>& pairs);
double challenge_score_from_components(const std::array<double, 4>& ap_values,
                                       const std::array<double, 5>& ar_values);

}  // namespace klassify
