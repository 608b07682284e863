#include "klassify/nn.hpp"

#include <algorithm>
#include <cmath>

namespace klassify::nn {

Param& ParamStore::add(const std::string& name, std::vector<int> dims) {
  if (contains(name)) raise(Errc::ShapeMismatch, "duplicate parameter name: " + name);
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  Param p;
  p.name = name;
  p.dims = std::move(dims);
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.m.assign(n, 0.0);
  p.v.assign(n, 0.0);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  for (Param& p : params_)
    if (p.name == name) return p;
  raise(Errc::ShapeMismatch, "unknown parameter: " + name);
}

const Param& ParamStore::get(const std::string& name) const {
  for (const Param& p : params_)
    if (p.name == name) return p;
  raise(Errc::ShapeMismatch, "unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const Param& p : params_)
    if (p.name == name) return true;
  return false;
}

std::size_t ParamStore::total_param_count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.count();
  return n;
}

void ParamStore::zero_grad() {
  for (Param& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void AdamW::step(ParamStore& store, double lr) {
  ++t_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * cfg_.weight_decay;
  for (Param& p : store.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.m[i] = b1 * p.m[i] + (1.0 - b1) * g;
      p.v[i] = b2 * p.v[i] + (1.0 - b2) * g * g;
      p.value[i] *= decay;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double cosine_lr(int epoch, int total_epochs, double lr_init, double lr_min) {
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(M_PI * epoch / total_epochs));
}

Tape::NodeId Tape::push(Tensor value, std::function<void(Tape&, Node&)> backprop, Param* p) {
  Node n;
  n.value = std::move(value);
  n.backprop = std::move(backprop);
  n.param = p;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::input(Tensor x) { return push(std::move(x), nullptr); }

Tape::NodeId Tape::param(Param& p, int rows, int cols) {
  if (p.count() != static_cast<std::size_t>(rows) * cols)
    raise(Errc::ShapeMismatch, "param " + p.name + " has " + std::to_string(p.count()) + " elements, requested " +
                                   std::to_string(rows) + "x" + std::to_string(cols));
  Tensor t(rows, cols);
  std::copy(p.value.begin(), p.value.end(), t.data().begin());
  Param* pp = &p;
  return push(std::move(t), [pp](Tape&, Node& self) {
    for (std::size_t i = 0; i < pp->grad.size(); ++i) pp->grad[i] += self.grad.data()[i];
  });
}

Tape::NodeId Tape::conv1d(NodeId xid, NodeId wid, NodeId bid, int kernel, int dilation, int groups) {
  const Tensor& x = nodes_[xid].value;
  const Tensor& w = nodes_[wid].value;
  const Tensor& b = nodes_[bid].value;
  const int k = kernel;
  if (k % 2 == 0) raise(Errc::ShapeMismatch, "conv1d kernel size must be odd, got " + std::to_string(k));
  if (dilation < 1) raise(Errc::ShapeMismatch, "conv1d dilation must be >= 1");
  if (groups < 1 || x.cols() % groups != 0) raise(Errc::ShapeMismatch, "conv1d groups must divide input channels");
  const int c_in_per_group = x.cols() / groups;
  if (w.size() % (static_cast<std::size_t>(c_in_per_group) * k) != 0)
    raise(Errc::ShapeMismatch, "conv1d weight size not a multiple of (c_in/groups)*k");
  const int c_out = static_cast<int>(w.size() / (static_cast<std::size_t>(c_in_per_group) * k));
  if (c_out % groups != 0) raise(Errc::ShapeMismatch, "conv1d groups must divide c_out");
  if (b.size() != static_cast<std::size_t>(c_out)) raise(Errc::ShapeMismatch, "conv1d bias size mismatch");

  const int t_len = x.rows();
  const int half = k / 2;
  const int co_per_group = c_out / groups;
  Tensor y(t_len, c_out);
  for (int t = 0; t < t_len; ++t) {
    double* yrow = y.row(t);
    for (int co = 0; co < c_out; ++co) {
      const int g = co / co_per_group;
      const int ci0 = g * c_in_per_group;
      double acc = b.data()[co];
      const double* wrow = w.data().data() + static_cast<std::size_t>(co) * c_in_per_group * k;
      for (int kk = 0; kk < k; ++kk) {
        const int tt = t + (kk - half) * dilation;
        if (tt < 0 || tt >= t_len) continue;
        const double* xrow = x.row(tt) + ci0;
        for (int ci = 0; ci < c_in_per_group; ++ci) acc += wrow[static_cast<std::size_t>(ci) * k + kk] * xrow[ci];
      }
      yrow[co] = acc;
    }
  }

  return push(std::move(y), [xid, wid, bid, dilation, groups, c_out, c_in_per_group, k](Tape& tape, Node& self) {
    const Tensor& x = tape.nodes_[xid].value;
    const Tensor& w = tape.nodes_[wid].value;
    Tensor& dx = tape.grad(xid);
    Tensor& dw = tape.grad(wid);
    Tensor& db = tape.grad(bid);
    const Tensor& dy = self.grad;
    const int t_len = x.rows();
    const int half = k / 2;
    const int co_per_group = c_out / groups;
    for (int t = 0; t < t_len; ++t) {
      const double* dyrow = dy.row(t);
      for (int co = 0; co < c_out; ++co) {
        const double g_out = dyrow[co];
        if (g_out == 0.0) continue;
        const int g = co / co_per_group;
        const int ci0 = g * c_in_per_group;
        db.data()[co] += g_out;
        const double* wrow = w.data().data() + static_cast<std::size_t>(co) * c_in_per_group * k;
        double* dwrow = dw.data().data() + static_cast<std::size_t>(co) * c_in_per_group * k;
        for (int kk = 0; kk < k; ++kk) {
          const int tt = t + (kk - half) * dilation;
          if (tt < 0 || tt >= t_len) continue;
          const double* xrow = x.row(tt) + ci0;
          double* dxrow = dx.row(tt) + ci0;
          for (int ci = 0; ci < c_in_per_group; ++ci) {
            dxrow[ci] += wrow[static_cast<std::size_t>(ci) * k + kk] * g_out;
            dwrow[static_cast<std::size_t>(ci) * k + kk] += xrow[ci] * g_out;
          }
        }
      }
    }
  });
}

Tape::NodeId Tape::relu(NodeId xid) {
  const Tensor& x = nodes_[xid].value;
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return push(std::move(y), [xid](Tape& tape, Node& self) {
    const Tensor& x = tape.nodes_[xid].value;
    Tensor& dx = tape.grad(xid);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x.data()[i] > 0.0) dx.data()[i] += self.grad.data()[i];
  });
}

Tape::NodeId Tape::layer_norm(NodeId xid, NodeId gid, NodeId bid, double eps) {
  const Tensor& x = nodes_[xid].value;
  const Tensor& g = nodes_[gid].value;
  const Tensor& b = nodes_[bid].value;
  const int c = x.cols();
  if (g.size() != static_cast<std::size_t>(c) || b.size() != static_cast<std::size_t>(c))
    raise(Errc::ShapeMismatch, "layer_norm affine size mismatch");
  Tensor y(x.rows(), c);
  for (int t = 0; t < x.rows(); ++t) {
    const double* xr = x.row(t);
    double mu = 0.0;
    for (int i = 0; i < c; ++i) mu += xr[i];
    mu /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= c;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    double* yr = y.row(t);
    for (int i = 0; i < c; ++i) yr[i] = g.data()[i] * ((xr[i] - mu) * inv_std) + b.data()[i];
  }
  return push(std::move(y), [xid, gid, bid, eps](Tape& tape, Node& self) {
    const Tensor& x = tape.nodes_[xid].value;
    const Tensor& g = tape.nodes_[gid].value;
    Tensor& dx = tape.grad(xid);
    Tensor& dg = tape.grad(gid);
    Tensor& db = tape.grad(bid);
    const Tensor& dy = self.grad;
    const int c = x.cols();
    for (int t = 0; t < x.rows(); ++t) {
      const double* xr = x.row(t);
      const double* dyr = dy.row(t);
      double mu = 0.0;
      for (int i = 0; i < c; ++i) mu += xr[i];
      mu /= c;
      double var = 0.0;
      for (int i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
      var /= c;
      const double inv_std = 1.0 / std::sqrt(var + eps);
      double dvar = 0.0, dmu = 0.0, sum_dxhat = 0.0;
      for (int i = 0; i < c; ++i) {
        const double dxhat = dyr[i] * g.data()[i];
        sum_dxhat += dxhat;
        dvar += dxhat * (xr[i] - mu);
        dg.data()[i] += dyr[i] * ((xr[i] - mu) * inv_std);
        db.data()[i] += dyr[i];
      }
      dvar *= -0.5 * inv_std * inv_std * inv_std;
      double sum_xc = 0.0;
      for (int i = 0; i < c; ++i) sum_xc += xr[i] - mu;
      dmu = -sum_dxhat * inv_std + dvar * (-2.0 / c) * sum_xc;
      double* dxr = dx.row(t);
      for (int i = 0; i < c; ++i) {
        const double dxhat = dyr[i] * g.data()[i];
        dxr[i] += dxhat * inv_std + dvar * 2.0 * (xr[i] - mu) / c + dmu / c;
      }
    }
  });
}

Tape::NodeId Tape::add(NodeId aid, NodeId bid) {
  const Tensor& a = nodes_[aid].value;
  const Tensor& b = nodes_[bid].value;
  if (a.rows() != b.rows() || a.cols() != b.cols()) raise(Errc::ShapeMismatch, "add: operand shapes differ");
  Tensor y(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) y.data()[i] = a.data()[i] + b.data()[i];
  return push(std::move(y), [aid, bid](Tape& tape, Node& self) {
    Tensor& da = tape.grad(aid);
    Tensor& db = tape.grad(bid);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      da.data()[i] += self.grad.data()[i];
      db.data()[i] += self.grad.data()[i];
    }
  });
}

Tape::NodeId Tape::linear(NodeId xid, NodeId wid, NodeId bid) {
  const Tensor& x = nodes_[xid].value;
  const Tensor& w = nodes_[wid].value;  // [c_out, c_in]
  const Tensor& b = nodes_[bid].value;
  const int c_in = x.cols();
  const int c_out = w.rows();
  if (w.cols() != c_in) raise(Errc::ShapeMismatch, "linear: weight cols != input channels");
  if (b.size() != static_cast<std::size_t>(c_out)) raise(Errc::ShapeMismatch, "linear: bias size mismatch");
  Tensor y(x.rows(), c_out);
  for (int t = 0; t < x.rows(); ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (int o = 0; o < c_out; ++o) {
      const double* wr = w.row(o);
      double acc = b.data()[o];
      for (int i = 0; i < c_in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return push(std::move(y), [xid, wid, bid, c_in, c_out](Tape& tape, Node& self) {
    const Tensor& x = tape.nodes_[xid].value;
    const Tensor& w = tape.nodes_[wid].value;
    Tensor& dx = tape.grad(xid);
    Tensor& dw = tape.grad(wid);
    Tensor& db = tape.grad(bid);
    const Tensor& dy = self.grad;
    for (int t = 0; t < x.rows(); ++t) {
      const double* xr = x.row(t);
      const double* dyr = dy.row(t);
      double* dxr = dx.row(t);
      for (int o = 0; o < c_out; ++o) {
        const double go = dyr[o];
        if (go == 0.0) continue;
        db.data()[o] += go;
        const double* wr = w.row(o);
        double* dwr = dw.row(o);
        for (int i = 0; i < c_in; ++i) {
          dxr[i] += wr[i] * go;
          dwr[i] += xr[i] * go;
        }
      }
    }
  });
}

Tape::NodeId Tape::attention_pool(NodeId xid, NodeId wid, NodeId bid, int valid_len) {
  const Tensor& x = nodes_[xid].value;
  const Tensor& w = nodes_[wid].value;  // [1, c]
  const Tensor& b = nodes_[bid].value;  // [1]
  const int c = x.cols();
  const int t_len = x.rows();
  if (w.size() != static_cast<std::size_t>(c)) raise(Errc::ShapeMismatch, "attention_pool: score weight size mismatch");
  const int n_valid = valid_len > 0 ? std::min(valid_len, t_len) : t_len;
  if (n_valid < 1) raise(Errc::ShapeMismatch, "attention_pool: no valid frames");

  std::vector<double> scores(static_cast<std::size_t>(n_valid));
  double max_s = -1e300;
  for (int t = 0; t < n_valid; ++t) {
    const double* xr = x.row(t);
    double s = b.data()[0];
    for (int i = 0; i < c; ++i) s += w.data()[i] * xr[i];
    scores[t] = s;
    max_s = std::max(max_s, s);
  }
  std::vector<double> alpha(static_cast<std::size_t>(t_len), 0.0);
  double z = 0.0;
  for (int t = 0; t < n_valid; ++t) {
    alpha[t] = std::exp(scores[t] - max_s);
    z += alpha[t];
  }
  for (int t = 0; t < n_valid; ++t) alpha[t] /= z;
  last_attention_ = alpha;

  Tensor y(1, c);
  for (int t = 0; t < n_valid; ++t) {
    const double* xr = x.row(t);
    for (int i = 0; i < c; ++i) y.data()[i] += alpha[t] * xr[i];
  }
  return push(std::move(y), [xid, wid, bid, alpha, n_valid, c](Tape& tape, Node& self) {
    const Tensor& x = tape.nodes_[xid].value;
    const Tensor& w = tape.nodes_[wid].value;
    Tensor& dx = tape.grad(xid);
    Tensor& dw = tape.grad(wid);
    Tensor& db = tape.grad(bid);
    const Tensor& dy = self.grad;  // 1 x c
    std::vector<double> dalpha(static_cast<std::size_t>(n_valid), 0.0);
    for (int t = 0; t < n_valid; ++t) {
      const double* xr = x.row(t);
      double acc = 0.0;
      for (int i = 0; i < c; ++i) {
        acc += dy.data()[i] * xr[i];
        dx.row(t)[i] += alpha[t] * dy.data()[i];
      }
      dalpha[t] = acc;
    }
    double s_dot = 0.0;
    for (int t = 0; t < n_valid; ++t) s_dot += alpha[t] * dalpha[t];
    for (int t = 0; t < n_valid; ++t) {
      const double du = alpha[t] * (dalpha[t] - s_dot);
      if (du == 0.0) continue;
      const double* xr = x.row(t);
      double* dxr = dx.row(t);
      for (int i = 0; i < c; ++i) {
        dxr[i] += du * w.data()[i];
        dw.data()[i] += du * xr[i];
      }
      db.data()[0] += du;
    }
  });
}

Tape::NodeId Tape::mask_rows(NodeId xid, int valid_len) {
  const Tensor& x = nodes_[xid].value;
  if (valid_len <= 0 || valid_len >= x.rows()) {
    // nothing to mask; pass through without a copy node
    return xid;
  }
  Tensor y = x;
  for (int t = valid_len; t < x.rows(); ++t)
    for (int i = 0; i < x.cols(); ++i) y.row(t)[i] = 0.0;
  return push(std::move(y), [xid, valid_len](Tape& tape, Node& self) {
    Tensor& dx = tape.grad(xid);
    for (int t = 0; t < valid_len; ++t)
      for (int i = 0; i < self.grad.cols(); ++i) dx.row(t)[i] += self.grad.row(t)[i];
  });
}

Tape::NodeId Tape::sigmoid(NodeId xid) {
  const Tensor& x = nodes_[xid].value;
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return push(std::move(y), [xid](Tape& tape, Node& self) {
    Tensor& dx = tape.grad(xid);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double p = self.value.data()[i];
      dx.data()[i] += p * (1.0 - p) * self.grad.data()[i];
    }
  });
}

Tape::NodeId Tape::softmax_rows(NodeId xid) {
  const Tensor& x = nodes_[xid].value;
  Tensor y(x.rows(), x.cols());
  const int c = x.cols();
  for (int t = 0; t < x.rows(); ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    double mx = xr[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, xr[i]);
    double z = 0.0;
    for (int i = 0; i < c; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      z += yr[i];
    }
    for (int i = 0; i < c; ++i) yr[i] /= z;
  }
  return push(std::move(y), [xid](Tape& tape, Node& self) {
    Tensor& dx = tape.grad(xid);
    const int c = self.value.cols();
    for (int t = 0; t < self.value.rows(); ++t) {
      const double* yr = self.value.row(t);
      const double* dyr = self.grad.row(t);
      double dot = 0.0;
      for (int i = 0; i < c; ++i) dot += yr[i] * dyr[i];
      double* dxr = dx.row(t);
      for (int i = 0; i < c; ++i) dxr[i] += yr[i] * (dyr[i] - dot);
    }
  });
}

Tape::NodeId Tape::bce_with_logits(NodeId logit_id, double label) {
  const Tensor& z = nodes_[logit_id].value;
  if (z.size() != 1) raise(Errc::ShapeMismatch, "bce_with_logits expects a scalar logit");
  const double v = z.data()[0];
  // max(z,0) - z*y + log(1+exp(-|z|))
  const double loss = std::max(v, 0.0) - v * label + std::log1p(std::exp(-std::abs(v)));
  Tensor y(1, 1, loss);
  return push(std::move(y), [logit_id, label, v](Tape& tape, Node& self) {
    const double p = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    tape.grad(logit_id).data()[0] += (p - label) * self.grad.data()[0];
  });
}

Tape::NodeId Tape::weighted_ce_with_logits(NodeId logits_id, const std::vector<int>& labels,
                                           const std::vector<double>& weights) {
  const Tensor& z = nodes_[logits_id].value;
  const int t_len = z.rows();
  const int k = z.cols();
  if (static_cast<int>(labels.size()) != t_len) raise(Errc::ShapeMismatch, "weighted CE: label count != frames");
  if (static_cast<int>(weights.size()) != k) raise(Errc::ShapeMismatch, "weighted CE: weight count != classes");
  Tensor probs(t_len, k);
  double w_total = 0.0;
  double loss = 0.0;
  for (int t = 0; t < t_len; ++t) {
    const int y = labels[t];
    if (y < 0 || y >= k) raise(Errc::ShapeMismatch, "weighted CE: label out of range");
    const double* zr = z.row(t);
    double* pr = probs.row(t);
    double mx = zr[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, zr[i]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      pr[i] = std::exp(zr[i] - mx);
      sum += pr[i];
    }
    for (int i = 0; i < k; ++i) pr[i] /= sum;
    // -log softmax in log space; exact even when probabilities saturate
    loss += weights[y] * (mx + std::log(sum) - zr[y]);
    w_total += weights[y];
  }
  loss /= w_total;
  Tensor out(1, 1, loss);
  return push(std::move(out), [logits_id, labels, weights, probs, w_total](Tape& tape, Node& self) {
    Tensor& dz = tape.grad(logits_id);
    const double g = self.grad.data()[0] / w_total;
    for (int t = 0; t < probs.rows(); ++t) {
      const int y = labels[t];
      const double wy = weights[y];
      const double* pr = probs.row(t);
      double* dzr = dz.row(t);
      for (int i = 0; i < probs.cols(); ++i) dzr[i] += g * wy * (pr[i] - (i == y ? 1.0 : 0.0));
    }
  });
}

void Tape::backward(NodeId loss) {
  if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size())) raise(Errc::NoTape, "no recorded forward pass for backward");
  if (nodes_[loss].value.size() != 1) raise(Errc::ShapeMismatch, "backward seed must be scalar");
  for (Node& n : nodes_) n.grad = Tensor(n.value.rows(), n.value.cols());
  nodes_[loss].grad.data()[0] = 1.0;
  for (NodeId i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backprop) n.backprop(*this, n);
  }
}

}  // namespace klassify::nn
