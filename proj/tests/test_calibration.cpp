#include <cmath>

#include "doctest.h"
#include "klassify/calibration.hpp"
#include "klassify/errors.hpp"
#include "klassify/metrics.hpp"
#include "klassify/rng.hpp"

using namespace klassify;

TEST_CASE("platt_apply closed forms") {
  CHECK(platt_apply(0.0, {0, 0, "video"}) == 0.5);
  CHECK(platt_apply(0.9, {0, 0, "video"}) == 0.5);
  CHECK(platt_apply(0.5, {-4, 2, "video"}) == doctest::Approx(0.5).epsilon(1e-15));

  // strictly monotone, direction = sign of -a
  double prev = platt_apply(0.0, {-3, 1, "video"});
  for (double s = 0.05; s <= 1.0; s += 0.05) {
    const double p = platt_apply(s, {-3, 1, "video"});
    CHECK(p > prev);
    prev = p;
  }
  prev = platt_apply(0.0, {3, 1, "video"});
  for (double s = 0.05; s <= 1.0; s += 0.05) {
    const double p = platt_apply(s, {3, 1, "video"});
    CHECK(p < prev);
    prev = p;
  }
}

namespace {

std::vector<ScoreRecord> synthetic_records(double a_true, double b_true, int n, Rng& rng) {
  std::vector<ScoreRecord> records;
  for (int i = 0; i < n; ++i) {
    ScoreRecord r;
    r.video_id = "v" + std::to_string(i);
    r.score = rng.uniform();
    const double p = 1.0 / (1.0 + std::exp(a_true * r.score + b_true));
    r.label = rng.bernoulli(p) ? 1 : 0;
    records.push_back(std::move(r));
  }
  return records;
}

double mean_nll(const std::vector<ScoreRecord>& records, const CalibrationParams& params) {
  double acc = 0.0;
  for (const ScoreRecord& r : records) {
    const double p = std::clamp(platt_apply(r.score, params), 1e-15, 1.0 - 1e-15);
    acc += *r.label == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / records.size();
}

}  // namespace

TEST_CASE("platt_fit recovers known coefficients within 5 percent") {
  Rng rng(501);
  const std::vector<ScoreRecord> records = synthetic_records(-6.0, 3.0, 10000, rng);
  const CalibrationParams fit = platt_fit(records, "video");
  CHECK(std::abs(fit.a - (-6.0)) / 6.0 < 0.05);
  CHECK(std::abs(fit.b - 3.0) / 3.0 < 0.05);
  CHECK(fit.modality == "video");
}

TEST_CASE("platt_fit converges on perfectly separated scores") {
  std::vector<ScoreRecord> records;
  for (int i = 0; i < 50; ++i) {
    records.push_back({"neg" + std::to_string(i), 0.1 + 0.002 * i, 0});
    records.push_back({"pos" + std::to_string(i), 0.8 + 0.002 * i, 1});
  }
  const CalibrationParams fit = platt_fit(records, "audio");
  CHECK(std::isfinite(fit.a));
  CHECK(std::isfinite(fit.b));
  CHECK(fit.a < 0.0);  // positively oriented scores
}

TEST_CASE("platt_fit rejects single-class input") {
  std::vector<ScoreRecord> records = {{"a", 0.3, 1}, {"b", 0.9, 1}};
  CHECK_THROWS_WITH_AS(platt_fit(records, "video"), doctest::Contains("SingleClass"), Error);
}

TEST_CASE("fit NLL never exceeds the uninformative calibrator") {
  Rng rng(502);
  for (int iter = 0; iter < 20; ++iter) {
    const double a_true = rng.uniform(-8.0, 2.0);
    const double b_true = rng.uniform(-2.0, 4.0);
    const std::vector<ScoreRecord> records = synthetic_records(a_true, b_true, 400, rng);
    bool pos = false, neg = false;
    for (const auto& r : records) (*r.label == 1 ? pos : neg) = true;
    if (!pos || !neg) continue;
    const CalibrationParams fit = platt_fit(records, "video");
    CHECK(mean_nll(records, fit) <= mean_nll(records, {0, 0, "video"}) + 1e-9);
  }
}

TEST_CASE("calibration preserves per-modality AUC to 1e-12") {
  Rng rng(503);
  for (int iter = 0; iter < 30; ++iter) {
    std::vector<ScoreRecord> records = synthetic_records(-5.0, 2.5, 300, rng);
    std::vector<double> raw, labels_d;
    std::vector<int> labels;
    for (const auto& r : records) {
      raw.push_back(r.score);
      labels.push_back(*r.label);
    }
    bool pos = false, neg = false;
    for (int y : labels) (y == 1 ? pos : neg) = true;
    if (!pos || !neg) continue;
    const CalibrationParams fit = platt_fit(records, "video");
    std::vector<double> calibrated;
    for (double s : raw) calibrated.push_back(platt_apply(s, fit));
    const double auc_raw = auc(raw, labels);
    const double auc_cal = fit.a < 0.0 ? auc(calibrated, labels) : 1.0 - auc(calibrated, labels);
    CHECK(std::abs(auc_raw - auc_cal) < 1e-12);
  }
}

TEST_CASE("max_out semantics") {
  CHECK(max_out(0.2, 0.9) == 0.9);
  CHECK(max_out(0.7, 0.7) == 0.7);
  CHECK(max_out(std::nullopt, 0.4) == 0.4);
  CHECK(max_out(0.3, std::nullopt) == 0.3);
  CHECK_THROWS_WITH_AS(max_out(std::nullopt, std::nullopt), doctest::Contains("BothAbsent"), Error);

  Rng rng(504);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(), v = rng.uniform();
    const double m = max_out(a, v);
    CHECK(m >= a);
    CHECK(m >= v);
    CHECK(max_out(a, v) == max_out(v, a));
  }
}

TEST_CASE("calibration_curve") {
  SUBCASE("all predictions 0.5 occupy one bin with the empirical rate") {
    std::vector<ScoreRecord> records;
    for (int i = 0; i < 40; ++i) records.push_back({"v" + std::to_string(i), 0.37, i % 2});
    // identity-ish params mapping everything to 0.5
    const auto table = calibration_curve(records, {0, 0, "video"}, 10);
    int occupied = 0;
    for (const auto& bin : table) {
      if (bin.count == 0) continue;
      ++occupied;
      CHECK(bin.count == 40);
      CHECK(bin.mean_predicted == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(bin.empirical_fraction == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK(occupied == 1);
  }
  SUBCASE("empty input gives an all-zero-count table") {
    const auto table = calibration_curve({}, {0, 0, "video"}, 10);
    CHECK(table.size() == 10);
    for (const auto& bin : table) CHECK(bin.count == 0);
  }
  SUBCASE("well-calibrated synthetic data has small bin gaps") {
    Rng rng(505);
    std::vector<ScoreRecord> records;
    for (int i = 0; i < 10000; ++i) {
      ScoreRecord r;
      r.video_id = "v" + std::to_string(i);
      r.score = rng.uniform();
      const double p = 1.0 / (1.0 + std::exp(-6.0 * r.score + 3.0));
      r.label = rng.bernoulli(p) ? 1 : 0;
      records.push_back(std::move(r));
    }
    // apply the true calibrator; predicted probabilities are then calibrated
    const auto table = calibration_curve(records, {-6.0, 3.0, "video"}, 10);
    for (const auto& bin : table) {
      if (bin.count < 100) continue;
      CHECK(std::abs(bin.mean_predicted - bin.empirical_fraction) <= 0.05);
    }
  }
}
