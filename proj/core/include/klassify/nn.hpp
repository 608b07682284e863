#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "klassify/errors.hpp"

namespace klassify::nn {

// Dense row-major T x C sequence tensor, double precision.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const double* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Named, shaped parameter array with gradient and AdamW moments.
struct Param {
  std::string name;
  std::vector<int> dims;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment

  std::size_t count() const { return value.size(); }
};

class ParamStore {
 public:
  Param& add(const std::string& name, std::vector<int> dims);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t total_param_count() const;
  void zero_grad();

  const std::deque<Param>& params() const { return params_; }
  std::deque<Param>& params() { return params_; }

 private:
  std::deque<Param> params_;  // insertion order; deque keeps references stable across add()
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int total_epochs = 100;
};

// Decoupled weight decay: w *= (1 - lr*wd) before the moment update.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(ParamStore& store, double lr);
  std::int64_t steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
};

// lr_min + 0.5*(lr_init - lr_min)*(1 + cos(pi*e/total)), lr_min = 0
double cosine_lr(int epoch, int total_epochs, double lr_init, double lr_min = 0.0);

// Reverse-mode tape over the fixed layer vocabulary used by the models.
// Build a fresh tape per forward pass; node ids index into the tape.
class Tape {
 public:
  using NodeId = int;

  NodeId input(Tensor x);
  // leaf view of a parameter reshaped to rows x cols
  NodeId param(Param& p, int rows, int cols);

  // cross-correlation along time with "same" zero padding; kernel size odd;
  // weight layout [c_out][c_in/groups][k] flat, bias [c_out]
  NodeId conv1d(NodeId x, NodeId w, NodeId b, int kernel, int dilation, int groups);
  NodeId relu(NodeId x);
  // per-frame normalization over channels, then per-channel affine
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-8);
  NodeId add(NodeId a, NodeId b);
  // x: T x Cin, w: [c_out, c_in], b: [c_out]; applied per frame
  NodeId linear(NodeId x, NodeId w, NodeId b);
  // learned scalar score per frame, softmax over time, weighted feature sum;
  // rows >= valid_len are masked out (-inf score). valid_len <= 0 means all.
  NodeId attention_pool(NodeId x, NodeId score_w, NodeId score_b, int valid_len = 0);
  // zeroes rows >= valid_len; keeps padded frames inert between layers
  NodeId mask_rows(NodeId x, int valid_len);
  NodeId sigmoid(NodeId x);
  NodeId softmax_rows(NodeId x);
  // scalar logit -> binary cross-entropy against label in {0,1}
  NodeId bce_with_logits(NodeId logit, double label);
  // T x K logits -> weighted CE, normalized by the sum of applied weights
  NodeId weighted_ce_with_logits(NodeId logits, const std::vector<int>& labels, const std::vector<double>& weights);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  // attention weights from the most recent attention_pool on this tape
  const std::vector<double>& last_attention() const { return last_attention_; }

  // Seeds d(loss)/d(loss) = 1 and accumulates into Param::grad for every
  // parameter node on the tape. loss must be 1x1.
  void backward(NodeId loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, Node&)> backprop;
    Param* param = nullptr;
  };

  NodeId push(Tensor value, std::function<void(Tape&, Node&)> backprop, Param* p = nullptr);
  Tensor& grad(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  std::vector<double> last_attention_;
};

}  // namespace klassify::nn
