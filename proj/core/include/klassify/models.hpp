#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "klassify/features.hpp"
#include "klassify/nn.hpp"

namespace klassify {

struct ClassifierConfig {
  int in_channels = 16;
  int hidden = 72;
  int blocks = 4;
  std::vector<int> dilations = {1, 2, 4, 8};
  int kernel = 3;
  int mlp_hidden = 32;
};

struct LocalizerConfig {
  ClassifierConfig trunk;
  int head_layers = 2;  // depthwise k=3 + pointwise per layer
  int tags = 4;         // O, B, I, L
};

enum class ModelKind { Classifier, Localizer };

inline constexpr int kTagO = 0;
inline constexpr int kTagB = 1;
inline constexpr int kTagI = 2;
inline constexpr int kTagL = 3;

std::size_t count_params(const ClassifierConfig& cfg);
std::size_t count_params(const LocalizerConfig& cfg);
std::size_t count_head_params(const LocalizerConfig& cfg);

// TCN trunk + attention pooling + MLP, sigmoid score. The trunk layer schema
// is shared with the localizer so trunk weights are interchangeable.
class Classifier {
 public:
  explicit Classifier(ClassifierConfig cfg);

  void init_params(std::uint64_t seed);

  // x: T x in_channels, channel-normalized. valid_len masks trailing pad
  // frames out of every layer (0 = no padding).
  double forward(const nn::Tensor& x, int valid_len = 0);
  // forward + BCE loss with tape retained for backward()
  double forward_loss(const nn::Tensor& x, double label, int valid_len = 0);
  void backward();

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const ClassifierConfig& config() const { return config_; }

  ChannelStats stats;
  double fps = 25.0;

 private:
  friend class Localizer;
  static void add_trunk_params(nn::ParamStore& store, const ClassifierConfig& cfg);
  static nn::Tape::NodeId trunk_forward(nn::Tape& tape, nn::ParamStore& store, const ClassifierConfig& cfg,
                                        nn::Tape::NodeId x, int valid_len);

  ClassifierConfig config_;
  nn::ParamStore params_;
  std::optional<nn::Tape> tape_;
  nn::Tape::NodeId loss_node_ = -1;
};

// Same trunk without pooling; depthwise-separable tagging head emitting
// per-frame logits over the four BILOU-style tags.
class Localizer {
 public:
  explicit Localizer(LocalizerConfig cfg);

  void init_params(std::uint64_t seed);
  // copies trunk parameters from a trained classifier (shared schema)
  void load_trunk_from(const Classifier& clf);

  // returns T x 4 logits
  nn::Tensor forward(const nn::Tensor& x, int valid_len = 0);
  nn::Tensor forward_probs(const nn::Tensor& x, int valid_len = 0);
  double forward_loss(const nn::Tensor& x, const std::vector<int>& tag_labels, int valid_len = 0);
  void backward();

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const LocalizerConfig& config() const { return config_; }

  ChannelStats stats;
  double fps = 25.0;
  std::vector<double> tag_weights = {0.05, 0.30, 0.30, 0.35};  // O, B, I, L

 private:
  LocalizerConfig config_;
  nn::ParamStore params_;
  std::optional<nn::Tape> tape_;
  nn::Tape::NodeId loss_node_ = -1;
};

// Plain numeric losses (reporting); training uses the fused tape ops.
double bce_loss(double score, int label);
double weighted_ce_loss(const nn::Tensor& tag_probs, const std::vector<int>& labels,
                        const std::vector<double>& weights);

// KLSF model container: magic "KLSF", version u32 LE, header length u32 +
// JSON header (kind, architecture, channel stats, fps, tag weights), then
// per-parameter records (name u32+bytes, rank u32, dims u32[], f32 values).
void save_classifier(const std::string& path, const Classifier& model);
void save_localizer(const std::string& path, const Localizer& model);
ModelKind peek_model_kind(const std::string& path);
Classifier load_classifier(const std::string& path);
Localizer load_localizer(const std::string& path);

}  // namespace klassify
