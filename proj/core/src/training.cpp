#include "klassify/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "klassify/metrics.hpp"

namespace klassify {

FeatureSequence augment(const FeatureSequence& x, const AugmentationConfig& cfg, Rng& rng, bool training) {
  if (!training) return x;
  FeatureSequence out = x;
  const int t_len = x.t;

  // feature shifting: per-channel constant offset
  if (rng.bernoulli(cfg.apply_prob)) {
    for (int c = 0; c < kFeatureChannels; ++c) {
      const double shift = rng.uniform(-cfg.shift_frac, cfg.shift_frac);
      for (int t = 0; t < t_len; ++t) out.at(t, c) += shift;
    }
  }
  // temporal dropout: one contiguous zeroed span of length <= max_frac*T
  if (rng.bernoulli(cfg.apply_prob)) {
    const int max_len = static_cast<int>(cfg.temporal_dropout_max_frac * t_len);
    if (max_len >= 1) {
      const int len = static_cast<int>(rng.uniform_int(1, max_len));
      const int start = static_cast<int>(rng.uniform_int(0, std::max(0, t_len - len)));
      for (int t = start; t < std::min(t_len, start + len); ++t)
        for (int c = 0; c < kFeatureChannels; ++c) out.at(t, c) = 0.0;
    }
  }
  // index swap: adjacent frame pairs exchanged at the given rate
  if (rng.bernoulli(cfg.apply_prob)) {
    for (int t = 0; t + 1 < t_len; ++t) {
      if (rng.bernoulli(cfg.index_swap_rate)) {
        for (int c = 0; c < kFeatureChannels; ++c) std::swap(out.at(t, c), out.at(t + 1, c));
        ++t;  // do not re-swap the same frame
      }
    }
  }
  // full channel dropout
  if (rng.bernoulli(cfg.apply_prob)) {
    for (int c = 0; c < kFeatureChannels; ++c) {
      if (rng.bernoulli(cfg.channel_dropout_p)) {
        for (int t = 0; t < t_len; ++t) out.at(t, c) = 0.0;
      }
    }
  }
  // Gaussian noise
  if (rng.bernoulli(cfg.apply_prob)) {
    for (double& v : out.values) v += rng.normal(0.0, cfg.noise_sigma);
  }
  return out;
}

std::vector<int> encode_tags(const SegmentSet& segments, int total_frames, double fps, bool merge) {
  SegmentSet segs = segments;
  std::sort(segs.begin(), segs.end(),
            [](const Segment& a, const Segment& b) { return a.start < b.start || (a.start == b.start && a.end < b.end); });
  if (merge) {
    segs = merge_overlapping(segs);
  } else if (has_overlap(segs)) {
    raise(Errc::OverlapError, "overlapping segments with merging disabled");
  }

  const double clip_end = total_frames / fps;
  std::vector<bool> fake(static_cast<std::size_t>(total_frames), false);
  for (const Segment& s : segs) {
    const double lo = std::max(0.0, s.start);
    const double hi = std::min(clip_end, s.end);
    if (hi <= lo) continue;
    for (int f = 0; f < total_frames; ++f) {
      const double f_lo = f / fps;
      const double f_hi = (f + 1) / fps;
      if (std::min(f_hi, hi) - std::max(f_lo, lo) > 0.0) fake[f] = true;
    }
  }

  std::vector<int> tags(static_cast<std::size_t>(total_frames), kTagO);
  int f = 0;
  while (f < total_frames) {
    if (!fake[f]) {
      ++f;
      continue;
    }
    int end = f;
    while (end + 1 < total_frames && fake[end + 1]) ++end;
    const int run = end - f + 1;
    tags[f] = kTagB;
    if (run >= 2) {
      for (int i = f + 1; i < end; ++i) tags[i] = kTagI;
      tags[end] = kTagL;
    }
    f = end + 1;
  }
  return tags;
}

namespace {

struct SplitCorpus {
  std::vector<const LabeledClip*> train;
  std::vector<const LabeledClip*> val;
};

SplitCorpus split_corpus(const std::vector<LabeledClip>& corpus, const TrainOptions& options) {
  std::vector<const LabeledClip*> usable;
  for (const LabeledClip& clip : corpus) {
    const bool fake_consistent = (clip.label == 1) == !clip.segments.empty();
    if (!fake_consistent)
      raise(Errc::LabelSegmentMismatch, "clip " + clip.id + ": label " + std::to_string(clip.label) +
                                            " inconsistent with " + std::to_string(clip.segments.size()) + " segments");
    if (clip.features.t > options.max_frames) continue;
    usable.push_back(&clip);
  }
  if (usable.empty()) raise(Errc::EmptyCorpus, "no usable clips (empty corpus or all longer than the frame cap)");

  SplitCorpus split;
  const auto threshold = static_cast<std::uint64_t>(options.val_fraction * 100.0);
  for (const LabeledClip* clip : usable) {
    bool to_val = false;
    switch (clip->split) {
      case SplitTag::Train: to_val = false; break;
      case SplitTag::Val: to_val = true; break;
      case SplitTag::Auto: to_val = (fnv1a(clip->id) % 100) < threshold; break;
    }
    (to_val ? split.val : split.train).push_back(clip);
  }
  auto has_both_classes = [](const std::vector<const LabeledClip*>& clips) {
    bool pos = false, neg = false;
    for (const LabeledClip* c : clips) (c->label == 1 ? pos : neg) = true;
    return pos && neg;
  };
  if (split.train.empty() || split.val.empty() || !has_both_classes(split.train) || !has_both_classes(split.val))
    raise(Errc::DegenerateSplit, "train/val split lacks a class (train " + std::to_string(split.train.size()) +
                                     " clips, val " + std::to_string(split.val.size()) + " clips)");
  return split;
}

double corpus_fps(const std::vector<const LabeledClip*>& clips) {
  const double fps = clips.front()->features.fps;
  for (const LabeledClip* c : clips)
    if (c->features.fps != fps) raise(Errc::FpsMismatch, "corpus mixes frame rates");
  return fps;
}

nn::Tensor to_tensor(const FeatureSequence& f) {
  nn::Tensor x(f.t, kFeatureChannels);
  std::copy(f.values.begin(), f.values.end(), x.data().begin());
  return x;
}

std::vector<std::vector<double>> snapshot(const nn::ParamStore& store) {
  std::vector<std::vector<double>> snap;
  for (const nn::Param& p : store.params()) snap.push_back(p.value);
  return snap;
}

void restore(nn::ParamStore& store, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < snap.size(); ++i) store.params()[i].value = snap[i];
}

double schedule_lr(const TrainOptions& options, int epoch) {
  const int total = options.optimizer.total_epochs > 0 ? options.optimizer.total_epochs : options.max_epochs;
  return nn::cosine_lr(epoch, total, options.optimizer.learning_rate);
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x7368756646ull, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

ClassifierTrainResult train_classifier(const std::vector<LabeledClip>& corpus, const ClassifierConfig& model_cfg,
                                       const TrainOptions& options) {
  const SplitCorpus split = split_corpus(corpus, options);
  const double fps = corpus_fps(split.train);

  std::vector<FeatureSequence> train_features;
  for (const LabeledClip* c : split.train) train_features.push_back(c->features);
  const ChannelStats stats = fit_stats(train_features);

  std::vector<FeatureSequence> train_norm;
  std::vector<nn::Tensor> val_x;
  for (const LabeledClip* c : split.train) train_norm.push_back(apply_stats(c->features, stats));
  for (const LabeledClip* c : split.val) val_x.push_back(to_tensor(apply_stats(c->features, stats)));

  ClassifierTrainResult result{Classifier(model_cfg)};
  Classifier& model = result.model;
  model.init_params(options.seed);
  model.stats = stats;
  model.fps = fps;

  nn::AdamW opt(options.optimizer);
  std::vector<std::vector<double>> best_params = snapshot(model.params());
  int since_improve = 0;

  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    const double lr = schedule_lr(options, epoch);
    const std::vector<std::size_t> order = shuffled_order(split.train.size(), options.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const LabeledClip* clip = split.train[idx];
      Rng aug_rng(mix_seed(options.seed, fnv1a(clip->id), static_cast<std::uint64_t>(epoch)));
      const FeatureSequence augmented = augment(train_norm[idx], options.augmentation, aug_rng, true);
      loss_sum += model.forward_loss(to_tensor(augmented), clip->label);
      model.backward();
      opt.step(model.params(), lr);
    }

    std::vector<double> val_scores;
    std::vector<int> val_labels;
    for (std::size_t i = 0; i < split.val.size(); ++i) {
      val_scores.push_back(model.forward(val_x[i]));
      val_labels.push_back(split.val[i]->label);
    }
    const double val_auc = auc(val_scores, val_labels);

    result.history.push_back({epoch, loss_sum / split.train.size(), val_auc, lr});
    if (options.epoch_hook) options.epoch_hook(epoch, model.params());

    if (result.best_epoch < 0 || val_auc > result.best_metric) {
      result.best_metric = val_auc;
      result.best_epoch = epoch;
      best_params = snapshot(model.params());
      since_improve = 0;
    } else {
      ++since_improve;
      if (since_improve > options.patience) break;
    }
  }
  restore(model.params(), best_params);
  return result;
}

LocalizerTrainResult train_localizer(const std::vector<LabeledClip>& corpus, const LocalizerConfig& model_cfg,
                                     const TrainOptions& options, const Classifier* warm_from) {
  const SplitCorpus split = split_corpus(corpus, options);
  const double fps = corpus_fps(split.train);

  std::vector<FeatureSequence> train_features;
  for (const LabeledClip* c : split.train) train_features.push_back(c->features);
  const ChannelStats stats = fit_stats(train_features);

  std::vector<FeatureSequence> train_norm;
  std::vector<nn::Tensor> val_x;
  std::vector<std::vector<int>> train_tags, val_tags;
  for (const LabeledClip* c : split.train) {
    train_norm.push_back(apply_stats(c->features, stats));
    train_tags.push_back(encode_tags(c->segments, c->features.t, fps));
  }
  for (const LabeledClip* c : split.val) {
    val_x.push_back(to_tensor(apply_stats(c->features, stats)));
    val_tags.push_back(encode_tags(c->segments, c->features.t, fps));
  }

  LocalizerTrainResult result{Localizer(model_cfg)};
  Localizer& model = result.model;
  model.init_params(options.seed);
  if (warm_from != nullptr) model.load_trunk_from(*warm_from);
  model.stats = stats;
  model.fps = fps;

  nn::AdamW opt(options.optimizer);
  std::vector<std::vector<double>> best_params = snapshot(model.params());
  int since_improve = 0;

  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    const double lr = schedule_lr(options, epoch);
    const std::vector<std::size_t> order = shuffled_order(split.train.size(), options.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const LabeledClip* clip = split.train[idx];
      Rng aug_rng(mix_seed(options.seed, fnv1a(clip->id), static_cast<std::uint64_t>(epoch)));
      const FeatureSequence augmented = augment(train_norm[idx], options.augmentation, aug_rng, true);
      loss_sum += model.forward_loss(to_tensor(augmented), train_tags[idx]);
      model.backward();
      opt.step(model.params(), lr);
    }

    // macro-averaged per-tag recall over pooled validation frames
    std::array<std::size_t, 4> correct{}, total{};
    for (std::size_t i = 0; i < split.val.size(); ++i) {
      const nn::Tensor probs = model.forward_probs(val_x[i]);
      for (int t = 0; t < probs.rows(); ++t) {
        int best = 0;
        for (int c = 1; c < probs.cols(); ++c)
          if (probs.at(t, c) > probs.at(t, best)) best = c;
        const int truth = val_tags[i][t];
        ++total[truth];
        if (best == truth) ++correct[truth];
      }
    }
    double macro = 0.0;
    int present = 0;
    for (int k = 0; k < 4; ++k) {
      if (total[k] == 0) continue;
      macro += static_cast<double>(correct[k]) / static_cast<double>(total[k]);
      ++present;
    }
    macro /= present;

    result.history.push_back({epoch, loss_sum / split.train.size(), macro, lr});
    if (options.epoch_hook) options.epoch_hook(epoch, model.params());

    if (result.best_epoch < 0 || macro > result.best_metric) {
      result.best_metric = macro;
      result.best_epoch = epoch;
      best_params = snapshot(model.params());
      since_improve = 0;
    } else {
      ++since_improve;
      if (since_improve > options.patience) break;
    }
  }
  restore(model.params(), best_params);
  return result;
}

std::vector<LabeledClip> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array()) raise(Errc::BadFormat, path + ": manifest must be a JSON array");

  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<LabeledClip> corpus;
  for (const auto& entry : j) {
    if (!entry.is_object() || !entry.contains("features") || !entry.contains("label"))
      raise(Errc::BadFormat, path + ": manifest entries need \"features\" and \"label\"");
    LabeledClip clip;
    std::filesystem::path fpath = entry["features"].get<std::string>();
    if (fpath.is_relative()) fpath = base / fpath;
    clip.id = fpath.stem().string();
    clip.features = read_klft(fpath.string());
    clip.label = entry["label"].get<int>();
    if (clip.label != 0 && clip.label != 1) raise(Errc::BadFormat, path + ": label must be 0 or 1");
    if (entry.contains("segments")) {
      for (const auto& seg : entry["segments"]) {
        if (!seg.is_array() || seg.size() != 2) raise(Errc::BadFormat, path + ": segment must be [start, end]");
        clip.segments.push_back({seg[0].get<double>(), seg[1].get<double>(), 1.0});
      }
    }
    if (entry.contains("split")) {
      const std::string s = entry["split"].get<std::string>();
      if (s == "train") clip.split = SplitTag::Train;
      else if (s == "val") clip.split = SplitTag::Val;
      else raise(Errc::BadFormat, path + ": split must be \"train\" or \"val\"");
    }
    corpus.push_back(std::move(clip));
  }
  return corpus;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  out << "epoch,train_loss,val_metric,lr\n";
  char buf[96];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.val_metric, r.lr);
    out << buf;
  }
}

}  // namespace klassify
