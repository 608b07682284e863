#include "klassify/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "klassify/errors.hpp"

namespace klassify {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) raise(Errc::ShapeMismatch, "auc: scores and labels differ in length");
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) raise(Errc::SingleClass, "auc needs both classes");

  // midrank formulation; ties get the average rank
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k)
    if (labels[k] == 1) rank_sum_pos += rank[k];
  const double num = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return num / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double temporal_iou(const Segment& a, const Segment& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double union_len = (a.end - a.start) + (b.end - b.start) - inter;
  return union_len > 0.0 ? inter / union_len : 0.0;
}

namespace {

struct PooledPrediction {
  double score;
  std::size_t video;
  double start;
  Segment seg;
};

// predictions of one video in descending score order, greedily matched
// against that video's ground truth
void greedy_match(const SegmentSet& preds_sorted, const SegmentSet& gt, double threshold,
                  std::vector<bool>& gt_used) {
  for (std::size_t p = 0; p < preds_sorted.size(); ++p) {
    double best_iou = 0.0;
    std::size_t best_g = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_used[g]) continue;
      const double iou = temporal_iou(preds_sorted[p], gt[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best_g = g;
      }
    }
    if (best_g < gt.size() && best_iou >= threshold) gt_used[best_g] = true;
  }
}

std::size_t total_ground_truth(const std::vector<EvalPair>& pairs) {
  std::size_t n = 0;
  for (const EvalPair& p : pairs) n += p.ground_truth.size();
  return n;
}

}  // namespace

double ap_at_iou(const std::vector<EvalPair>& pairs, double threshold) {
  const std::size_t n_gt = total_ground_truth(pairs);
  if (n_gt == 0) raise(Errc::NoGroundTruth, "AP undefined without ground-truth segments");

  std::vector<PooledPrediction> pool;
  for (std::size_t v = 0; v < pairs.size(); ++v)
    for (const Segment& s : pairs[v].predictions) pool.push_back({s.score, v, s.start, s});
  std::sort(pool.begin(), pool.end(), [&](const PooledPrediction& a, const PooledPrediction& b) {
    if (a.score != b.score) return a.score > b.score;
    if (pairs[a.video].video_id != pairs[b.video].video_id) return pairs[a.video].video_id < pairs[b.video].video_id;
    return a.start < b.start;
  });

  std::vector<std::vector<bool>> gt_used(pairs.size());
  for (std::size_t v = 0; v < pairs.size(); ++v) gt_used[v].assign(pairs[v].ground_truth.size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const PooledPrediction& pred = pool[i];
    const SegmentSet& gt = pairs[pred.video].ground_truth;
    double best_iou = 0.0;
    std::size_t best_g = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_used[pred.video][g]) continue;
      const double iou = temporal_iou(pred.seg, gt[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best_g = g;
      }
    }
    if (best_g < gt.size() && best_iou >= threshold) {
      gt_used[pred.video][best_g] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  if (precision.empty()) return 0.0;

  // precision envelope + all-point interpolation
  for (std::size_t i = precision.size() - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = recall[0] * precision[0];
  for (std::size_t i = 1; i < precision.size(); ++i) ap += (recall[i] - recall[i - 1]) * precision[i];
  return ap;
}

double ar_at_n(const std::vector<EvalPair>& pairs, int n) {
  if (n < 1) raise(Errc::ShapeMismatch, "ar_at_n: N must be >= 1");
  double sum = 0.0;
  std::size_t n_videos = 0;
  for (const EvalPair& pair : pairs) {
    if (pair.ground_truth.empty()) continue;
    ++n_videos;
    SegmentSet preds = pair.predictions;
    std::sort(preds.begin(), preds.end(), [](const Segment& a, const Segment& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.start < b.start;
    });
    if (static_cast<int>(preds.size()) > n) preds.resize(static_cast<std::size_t>(n));
    double recall_acc = 0.0;
    int n_thresholds = 0;
    for (int ti = 0; ti <= 9; ++ti) {
      const double threshold = 0.5 + 0.05 * ti;
      std::vector<bool> gt_used(pair.ground_truth.size(), false);
      greedy_match(preds, pair.ground_truth, threshold, gt_used);
      std::size_t matched = 0;
      for (bool u : gt_used) matched += u ? 1 : 0;
      recall_acc += static_cast<double>(matched) / static_cast<double>(pair.ground_truth.size());
      ++n_thresholds;
    }
    sum += recall_acc / n_thresholds;
  }
  if (n_videos == 0) raise(Errc::NoGroundTruth, "AR undefined: no video has ground-truth segments");
  return sum / static_cast<double>(n_videos);
}

double challenge_score(const std::vector<EvalPair>& pairs) {
  std::array<double, 4> ap{};
  for (std::size_t i = 0; i < kScoreApThresholds.size(); ++i) ap[i] = ap_at_iou(pairs, kScoreApThresholds[i]);
  std::array<double, 5> ar{};
  for (std::size_t i = 0; i < kScoreArProposals.size(); ++i) ar[i] = ar_at_n(pairs, kScoreArProposals[i]);
  return challenge_score_from_components(ap, ar);
}

double challenge_score_from_components(const std::array<double, 4>& ap_values,
                                       const std::array<double, 5>& ar_values) {
  double ap_sum = 0.0;
  for (double v : ap_values) ap_sum += v;
  double ar_sum = 0.0;
  for (double v : ar_values) ar_sum += v;
  return ap_sum / 8.0 + ar_sum / 10.0;
}

}  // namespace klassify
