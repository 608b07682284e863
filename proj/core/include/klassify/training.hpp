#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "klassify/features.hpp"
#include "klassify/models.hpp"
#include "klassify/rng.hpp"
#include "klassify/segments.hpp"

namespace klassify {

enum class SplitTag { Auto, Train, Val };

struct LabeledClip {
  std::string id;
  FeatureSequence features;
  int label = 0;          // 1 iff segments non-empty
  SegmentSet segments;    // fake intervals in seconds
  SplitTag split = SplitTag::Auto;
};

struct AugmentationConfig {
  double shift_frac = 0.1;
  double temporal_dropout_max_frac = 0.1;
  double index_swap_rate = 0.05;
  double channel_dropout_p = 0.1;
  double noise_sigma = 0.02;
  double apply_prob = 0.5;  // per-augmentation
};

// Training-time feature augmentation, applied after normalization. In
// evaluation mode (training = false) this is the identity.
FeatureSequence augment(const FeatureSequence& x, const AugmentationConfig& cfg, Rng& rng, bool training);

// BILOU-style frame tags (L=1 run -> lone B, L=2 -> B L, L>=3 -> B I..I L).
// A frame is fake iff [f/fps, (f+1)/fps) overlaps a segment with positive
// measure. Overlapping segments are merged first unless merging is disabled,
// in which case overlap raises OverlapError.
std::vector<int> encode_tags(const SegmentSet& segments, int total_frames, double fps, bool merge = true);

struct TrainOptions {
  nn::OptimizerConfig optimizer;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  AugmentationConfig augmentation;
  double val_fraction = 0.10;  // hash split for SplitTag::Auto clips
  int max_frames = 256;        // clips longer than this are dropped
  // called after each epoch with the epoch index and current parameters
  std::function<void(int, const nn::ParamStore&)> epoch_hook;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;
};

struct ClassifierTrainResult {
  Classifier model;
  int best_epoch = -1;
  double best_metric = 0.0;
  std::vector<EpochRecord> history;
};

struct LocalizerTrainResult {
  Localizer model;
  int best_epoch = -1;
  double best_metric = 0.0;
  std::vector<EpochRecord> history;
};

// Validation metric: AUC. Returns the best-epoch checkpoint.
ClassifierTrainResult train_classifier(const std::vector<LabeledClip>& corpus, const ClassifierConfig& model_cfg,
                                       const TrainOptions& options);

// Validation metric: macro-averaged per-tag recall. `warm_from` copies the
// classifier trunk into the localizer before training (cold start otherwise).
LocalizerTrainResult train_localizer(const std::vector<LabeledClip>& corpus, const LocalizerConfig& model_cfg,
                                     const TrainOptions& options, const Classifier* warm_from = nullptr);

// Corpus manifest: JSON array of {"features": path, "label": 0|1,
// "segments": [[start_s, end_s], ...], "split": "train"|"val" (optional)}.
// Relative feature paths resolve against the manifest directory.
std::vector<LabeledClip> read_manifest(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace klassify
