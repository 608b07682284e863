#pragma once

#include <optional>
#include <string>
#include <vector>

namespace klassify {

struct CalibrationParams {
  double a = 0.0;
  double b = 0.0;
  std::string modality = "video";  // "audio" or "video"
};

struct ScoreRecord {
  std::string video_id;
  double score = 0.0;
  std::optional<int> label;  // 0 or 1 when present
};

// p(y=1 | s) = 1 / (1 + exp(a*s + b))
double platt_apply(double score, const CalibrationParams& params);

// Newton fit of (a, b) on the mean negative log-likelihood with Platt's
// smoothed targets t+ = (N+ + 1)/(N+ + 2), t- = 1/(N- + 2). At most
// `max_iterations` iterations, gradient-norm tolerance 1e-10.
CalibrationParams platt_fit(const std::vector<ScoreRecord>& records, const std::string& modality,
                            int max_iterations = 100, double tolerance = 1e-10);

// max of the calibrated probabilities; a missing modality falls back to the
// present one; both missing is an error
double max_out(std::optional<double> p_audio, std::optional<double> p_video);

struct CalibrationBin {
  double mean_predicted = 0.0;
  double empirical_fraction = 0.0;
  std::size_t count = 0;
};

std::vector<CalibrationBin> calibration_curve(const std::vector<ScoreRecord>& records,
                                              const CalibrationParams& params, int bins = 10);

// CSV "video_id;score" or "video_id;score;label"
std::vector<ScoreRecord> read_scores_csv(const std::string& path, bool require_labels,
                                         bool reject_duplicates = false);
void write_scores_csv(const std::string& path, const std::vector<ScoreRecord>& records);

CalibrationParams read_calibration_json(const std::string& path);
void write_calibration_json(const std::string& path, const CalibrationParams& params);

}  // namespace klassify
