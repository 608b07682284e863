#include "klassify/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "klassify/rng.hpp"

namespace klassify {

using nlohmann::json;
using nn::Tape;

namespace {

std::size_t conv_params(int c_out, int c_in_per_group, int k) {
  return static_cast<std::size_t>(c_out) * c_in_per_group * k + c_out;
}

}  // namespace

std::size_t count_params(const ClassifierConfig& cfg) {
  std::size_t n = conv_params(cfg.hidden, cfg.in_channels, 1);  // input projection
  for (int b = 0; b < cfg.blocks; ++b) {
    n += conv_params(cfg.hidden, cfg.hidden, cfg.kernel) * 2;      // two convs
    n += static_cast<std::size_t>(cfg.hidden) * 2 * 2;             // two layer norms
  }
  n += static_cast<std::size_t>(cfg.hidden) + 1;                   // attention score
  n += static_cast<std::size_t>(cfg.mlp_hidden) * cfg.hidden + cfg.mlp_hidden;
  n += static_cast<std::size_t>(cfg.mlp_hidden) + 1;
  return n;
}

std::size_t count_head_params(const LocalizerConfig& cfg) {
  const int h = cfg.trunk.hidden;
  std::size_t n = 0;
  for (int l = 0; l < cfg.head_layers; ++l) {
    n += conv_params(h, 1, cfg.trunk.kernel);  // depthwise
    n += conv_params(h, h, 1);                 // pointwise
  }
  n += static_cast<std::size_t>(cfg.tags) * h + cfg.tags;
  return n;
}

std::size_t count_params(const LocalizerConfig& cfg) {
  std::size_t trunk = conv_params(cfg.trunk.hidden, cfg.trunk.in_channels, 1);
  for (int b = 0; b < cfg.trunk.blocks; ++b) {
    trunk += conv_params(cfg.trunk.hidden, cfg.trunk.hidden, cfg.trunk.kernel) * 2;
    trunk += static_cast<std::size_t>(cfg.trunk.hidden) * 2 * 2;
  }
  return trunk + count_head_params(cfg);
}

namespace {

void he_uniform(nn::Param& p, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  for (double& v : p.value) v = rng.uniform(-limit, limit);
}

void init_trunk(nn::ParamStore& store, const ClassifierConfig& cfg, Rng& rng) {
  he_uniform(store.get("trunk.in_proj.w"), cfg.in_channels, rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string base = "trunk.block" + std::to_string(b);
    he_uniform(store.get(base + ".conv1.w"), cfg.hidden * cfg.kernel, rng);
    he_uniform(store.get(base + ".conv2.w"), cfg.hidden * cfg.kernel, rng);
    std::fill(store.get(base + ".ln1.g").value.begin(), store.get(base + ".ln1.g").value.end(), 1.0);
    std::fill(store.get(base + ".ln2.g").value.begin(), store.get(base + ".ln2.g").value.end(), 1.0);
  }
}

}  // namespace

void Classifier::add_trunk_params(nn::ParamStore& store, const ClassifierConfig& cfg) {
  store.add("trunk.in_proj.w", {cfg.hidden, cfg.in_channels, 1});
  store.add("trunk.in_proj.b", {cfg.hidden});
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string base = "trunk.block" + std::to_string(b);
    store.add(base + ".conv1.w", {cfg.hidden, cfg.hidden, cfg.kernel});
    store.add(base + ".conv1.b", {cfg.hidden});
    store.add(base + ".ln1.g", {cfg.hidden});
    store.add(base + ".ln1.b", {cfg.hidden});
    store.add(base + ".conv2.w", {cfg.hidden, cfg.hidden, cfg.kernel});
    store.add(base + ".conv2.b", {cfg.hidden});
    store.add(base + ".ln2.g", {cfg.hidden});
    store.add(base + ".ln2.b", {cfg.hidden});
  }
}

Tape::NodeId Classifier::trunk_forward(Tape& tape, nn::ParamStore& store, const ClassifierConfig& cfg,
                                       Tape::NodeId x, int valid_len) {
  const int h = cfg.hidden;
  auto pw = [&](const std::string& name, int rows, int cols) { return tape.param(store.get(name), rows, cols); };

  Tape::NodeId cur = tape.conv1d(x, pw("trunk.in_proj.w", h, cfg.in_channels), pw("trunk.in_proj.b", 1, h), 1, 1, 1);
  cur = tape.mask_rows(cur, valid_len);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string base = "trunk.block" + std::to_string(b);
    const int d = cfg.dilations[b];
    Tape::NodeId res = cur;
    cur = tape.conv1d(cur, pw(base + ".conv1.w", h, h * cfg.kernel), pw(base + ".conv1.b", 1, h), cfg.kernel, d, 1);
    cur = tape.layer_norm(cur, pw(base + ".ln1.g", 1, h), pw(base + ".ln1.b", 1, h));
    cur = tape.relu(cur);
    // pad rows leave layer_norm as its bias; re-zero before the next conv
    cur = tape.mask_rows(cur, valid_len);
    cur = tape.conv1d(cur, pw(base + ".conv2.w", h, h * cfg.kernel), pw(base + ".conv2.b", 1, h), cfg.kernel, d, 1);
    cur = tape.layer_norm(cur, pw(base + ".ln2.g", 1, h), pw(base + ".ln2.b", 1, h));
    cur = tape.relu(cur);
    cur = tape.add(cur, res);
    cur = tape.mask_rows(cur, valid_len);
  }
  return cur;
}

Classifier::Classifier(ClassifierConfig cfg) : config_(std::move(cfg)) {
  if (static_cast<int>(config_.dilations.size()) != config_.blocks)
    raise(Errc::ShapeMismatch, "classifier config: dilations count != blocks");
  add_trunk_params(params_, config_);
  params_.add("clf.pool.w", {1, config_.hidden});
  params_.add("clf.pool.b", {1});
  params_.add("clf.mlp.fc1.w", {config_.mlp_hidden, config_.hidden});
  params_.add("clf.mlp.fc1.b", {config_.mlp_hidden});
  params_.add("clf.mlp.fc2.w", {1, config_.mlp_hidden});
  params_.add("clf.mlp.fc2.b", {1});
}

void Classifier::init_params(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x636c6173ull));
  init_trunk(params_, config_, rng);
  he_uniform(params_.get("clf.pool.w"), config_.hidden, rng);
  he_uniform(params_.get("clf.mlp.fc1.w"), config_.hidden, rng);
  he_uniform(params_.get("clf.mlp.fc2.w"), config_.mlp_hidden, rng);
}

double Classifier::forward(const nn::Tensor& x, int valid_len) {
  if (x.cols() != config_.in_channels)
    raise(Errc::ShapeMismatch, "classifier input must have " + std::to_string(config_.in_channels) + " channels");
  tape_.emplace();
  Tape& tape = *tape_;
  auto pw = [&](const std::string& name, int rows, int cols) { return tape.param(params_.get(name), rows, cols); };

  Tape::NodeId cur = trunk_forward(tape, params_, config_, tape.input(x), valid_len);
  cur = tape.attention_pool(cur, pw("clf.pool.w", 1, config_.hidden), pw("clf.pool.b", 1, 1), valid_len);
  cur = tape.linear(cur, pw("clf.mlp.fc1.w", config_.mlp_hidden, config_.hidden), pw("clf.mlp.fc1.b", 1, config_.mlp_hidden));
  cur = tape.relu(cur);
  cur = tape.linear(cur, pw("clf.mlp.fc2.w", 1, config_.mlp_hidden), pw("clf.mlp.fc2.b", 1, 1));
  loss_node_ = cur;  // logit node; bce attaches in forward_loss
  const double logit = tape.value(cur).data()[0];
  return logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
}

double Classifier::forward_loss(const nn::Tensor& x, double label, int valid_len) {
  forward(x, valid_len);
  loss_node_ = tape_->bce_with_logits(loss_node_, label);
  return tape_->value(loss_node_).data()[0];
}

void Classifier::backward() {
  if (!tape_ || loss_node_ < 0) raise(Errc::NoTape, "backward without a recorded forward pass");
  params_.zero_grad();
  tape_->backward(loss_node_);
}

Localizer::Localizer(LocalizerConfig cfg) : config_(std::move(cfg)) {
  if (static_cast<int>(config_.trunk.dilations.size()) != config_.trunk.blocks)
    raise(Errc::ShapeMismatch, "localizer config: dilations count != blocks");
  Classifier::add_trunk_params(params_, config_.trunk);
  const int h = config_.trunk.hidden;
  for (int l = 0; l < config_.head_layers; ++l) {
    const std::string base = "loc.head" + std::to_string(l);
    params_.add(base + ".dw.w", {h, 1, config_.trunk.kernel});
    params_.add(base + ".dw.b", {h});
    params_.add(base + ".pw.w", {h, h, 1});
    params_.add(base + ".pw.b", {h});
  }
  params_.add("loc.out.w", {config_.tags, h});
  params_.add("loc.out.b", {config_.tags});
}

void Localizer::init_params(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6c6f63ull));
  init_trunk(params_, config_.trunk, rng);
  const int h = config_.trunk.hidden;
  for (int l = 0; l < config_.head_layers; ++l) {
    const std::string base = "loc.head" + std::to_string(l);
    he_uniform(params_.get(base + ".dw.w"), config_.trunk.kernel, rng);
    he_uniform(params_.get(base + ".pw.w"), h, rng);
  }
  he_uniform(params_.get("loc.out.w"), h, rng);
}

void Localizer::load_trunk_from(const Classifier& clf) {
  for (const nn::Param& src : clf.params().params()) {
    if (src.name.rfind("trunk.", 0) != 0) continue;
    nn::Param& dst = params_.get(src.name);
    if (dst.count() != src.count())
      raise(Errc::ShapeMismatch, "trunk parameter " + src.name + " shape differs");
    dst.value = src.value;
  }
}

nn::Tensor Localizer::forward(const nn::Tensor& x, int valid_len) {
  if (x.cols() != config_.trunk.in_channels)
    raise(Errc::ShapeMismatch, "localizer input must have " + std::to_string(config_.trunk.in_channels) + " channels");
  tape_.emplace();
  Tape& tape = *tape_;
  auto pw = [&](const std::string& name, int rows, int cols) { return tape.param(params_.get(name), rows, cols); };

  const int h = config_.trunk.hidden;
  Tape::NodeId cur = Classifier::trunk_forward(tape, params_, config_.trunk, tape.input(x), valid_len);
  for (int l = 0; l < config_.head_layers; ++l) {
    const std::string base = "loc.head" + std::to_string(l);
    cur = tape.conv1d(cur, pw(base + ".dw.w", h, config_.trunk.kernel), pw(base + ".dw.b", 1, h), config_.trunk.kernel, 1, h);
    cur = tape.conv1d(cur, pw(base + ".pw.w", h, h), pw(base + ".pw.b", 1, h), 1, 1, 1);
    cur = tape.relu(cur);
    cur = tape.mask_rows(cur, valid_len);
  }
  cur = tape.linear(cur, pw("loc.out.w", config_.tags, h), pw("loc.out.b", 1, config_.tags));
  loss_node_ = cur;
  return tape.value(cur);
}

nn::Tensor Localizer::forward_probs(const nn::Tensor& x, int valid_len) {
  forward(x, valid_len);
  loss_node_ = tape_->softmax_rows(loss_node_);
  return tape_->value(loss_node_);
}

double Localizer::forward_loss(const nn::Tensor& x, const std::vector<int>& tag_labels, int valid_len) {
  forward(x, valid_len);
  loss_node_ = tape_->weighted_ce_with_logits(loss_node_, tag_labels, tag_weights);
  return tape_->value(loss_node_).data()[0];
}

void Localizer::backward() {
  if (!tape_ || loss_node_ < 0) raise(Errc::NoTape, "backward without a recorded forward pass");
  params_.zero_grad();
  tape_->backward(loss_node_);
}

double bce_loss(double score, int label) {
  const double p = std::min(std::max(score, 1e-12), 1.0 - 1e-12);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double weighted_ce_loss(const nn::Tensor& tag_probs, const std::vector<int>& labels,
                        const std::vector<double>& weights) {
  if (tag_probs.rows() != static_cast<int>(labels.size()))
    raise(Errc::ShapeMismatch, "weighted CE: label count != frames");
  double loss = 0.0, w_total = 0.0;
  for (int t = 0; t < tag_probs.rows(); ++t) {
    const int y = labels[t];
    loss += weights[y] * -std::log(std::max(tag_probs.at(t, y), 1e-12));
    w_total += weights[y];
  }
  return loss / w_total;
}

// ---------------------------------------------------------------------------
// KLSF serialization

namespace {

constexpr std::uint32_t kKlsfVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) raise(Errc::TruncatedStream, path + ": unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

json config_to_json(const ClassifierConfig& c) {
  return json{{"in_channels", c.in_channels}, {"hidden", c.hidden},       {"blocks", c.blocks},
              {"dilations", c.dilations},     {"kernel", c.kernel},       {"mlp_hidden", c.mlp_hidden}};
}

ClassifierConfig config_from_json(const json& j) {
  ClassifierConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.dilations = j.at("dilations").get<std::vector<int>>();
  c.kernel = j.at("kernel").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  return c;
}

void write_model(const std::string& path, const std::string& kind, const json& arch, const ChannelStats& stats,
                 double fps, const std::vector<double>& tag_weights, const nn::ParamStore& store) {
  json header;
  header["kind"] = kind;
  header["arch"] = arch;
  header["stats"] = {{"mean", stats.mean}, {"stddev", stats.stddev}};
  header["fps"] = fps;
  header["tag_weights"] = tag_weights;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  out.write("KLSF", 4);
  put_u32(out, kKlsfVersion);
  put_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const nn::Param& p : store.params()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.dims.size()));
    for (int d : p.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.value) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }
  if (!out) raise(Errc::BadFormat, "write failed: " + path);
}

struct RawModel {
  json header;
  std::vector<nn::Param> params;
};

RawModel read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "KLSF", 4) != 0) raise(Errc::BadFormat, path + ": bad KLSF magic");
  const std::uint32_t version = get_u32(in, path);
  if (version != kKlsfVersion) raise(Errc::BadFormat, path + ": unsupported KLSF version");
  const std::uint32_t header_len = get_u32(in, path);
  std::string header_str(header_len, '\0');
  if (!in.read(header_str.data(), header_len)) raise(Errc::TruncatedStream, path + ": truncated header");
  RawModel raw;
  raw.header = json::parse(header_str, nullptr, false);
  if (raw.header.is_discarded()) raise(Errc::BadFormat, path + ": invalid JSON header");

  while (true) {
    unsigned char peek[4];
    if (!in.read(reinterpret_cast<char*>(peek), 4)) break;
    const std::uint32_t name_len = static_cast<std::uint32_t>(peek[0]) | (static_cast<std::uint32_t>(peek[1]) << 8) |
                                   (static_cast<std::uint32_t>(peek[2]) << 16) |
                                   (static_cast<std::uint32_t>(peek[3]) << 24);
    nn::Param p;
    p.name.resize(name_len);
    if (!in.read(p.name.data(), name_len)) raise(Errc::TruncatedStream, path + ": truncated parameter name");
    const std::uint32_t rank = get_u32(in, path);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = get_u32(in, path);
      p.dims.push_back(static_cast<int>(d));
      count *= d;
    }
    p.value.resize(count);
    for (double& v : p.value) {
      const std::uint32_t bits = get_u32(in, path);
      float f;
      std::memcpy(&f, &bits, 4);
      v = f;
    }
    p.grad.assign(count, 0.0);
    p.m.assign(count, 0.0);
    p.v.assign(count, 0.0);
    raw.params.push_back(std::move(p));
  }
  return raw;
}

void fill_store(nn::ParamStore& store, const std::vector<nn::Param>& loaded, const std::string& path) {
  for (const nn::Param& p : loaded) {
    if (!store.contains(p.name)) raise(Errc::BadFormat, path + ": unexpected parameter " + p.name);
    nn::Param& dst = store.get(p.name);
    if (dst.count() != p.count()) raise(Errc::BadFormat, path + ": parameter " + p.name + " has wrong size");
    dst.value = p.value;
  }
  for (const nn::Param& p : store.params()) {
    bool found = false;
    for (const nn::Param& q : loaded)
      if (q.name == p.name) found = true;
    if (!found) raise(Errc::BadFormat, path + ": missing parameter " + p.name);
  }
}

void read_stats(const json& header, ChannelStats& stats, double& fps) {
  const auto& s = header.at("stats");
  const auto mean = s.at("mean").get<std::vector<double>>();
  const auto stddev = s.at("stddev").get<std::vector<double>>();
  if (mean.size() != kFeatureChannels || stddev.size() != kFeatureChannels)
    raise(Errc::BadFormat, "model header: channel stats must have 16 entries");
  std::copy(mean.begin(), mean.end(), stats.mean.begin());
  std::copy(stddev.begin(), stddev.end(), stats.stddev.begin());
  fps = header.at("fps").get<double>();
}

}  // namespace

void save_classifier(const std::string& path, const Classifier& model) {
  write_model(path, "classifier", config_to_json(model.config()), model.stats, model.fps, {}, model.params());
}

void save_localizer(const std::string& path, const Localizer& model) {
  json arch = config_to_json(model.config().trunk);
  arch["head_layers"] = model.config().head_layers;
  arch["tags"] = model.config().tags;
  write_model(path, "localizer", arch, model.stats, model.fps, model.tag_weights, model.params());
}

ModelKind peek_model_kind(const std::string& path) {
  RawModel raw = read_model(path);
  const std::string kind = raw.header.at("kind").get<std::string>();
  if (kind == "classifier") return ModelKind::Classifier;
  if (kind == "localizer") return ModelKind::Localizer;
  raise(Errc::BadFormat, path + ": unknown model kind " + kind);
}

Classifier load_classifier(const std::string& path) {
  RawModel raw = read_model(path);
  if (raw.header.at("kind").get<std::string>() != "classifier")
    raise(Errc::ModelKindMismatch, path + " is not a classifier model");
  Classifier model(config_from_json(raw.header.at("arch")));
  fill_store(model.params(), raw.params, path);
  read_stats(raw.header, model.stats, model.fps);
  return model;
}

Localizer load_localizer(const std::string& path) {
  RawModel raw = read_model(path);
  if (raw.header.at("kind").get<std::string>() != "localizer")
    raise(Errc::ModelKindMismatch, path + " is not a localizer model");
  LocalizerConfig cfg;
  cfg.trunk = config_from_json(raw.header.at("arch"));
  cfg.head_layers = raw.header.at("arch").at("head_layers").get<int>();
  cfg.tags = raw.header.at("arch").at("tags").get<int>();
  Localizer model(cfg);
  fill_store(model.params(), raw.params, path);
  read_stats(raw.header, model.stats, model.fps);
  model.tag_weights = raw.header.at("tag_weights").get<std::vector<double>>();
  return model;
}

}  // namespace klassify
