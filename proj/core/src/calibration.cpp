#include "klassify/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "klassify/errors.hpp"

namespace klassify {

double platt_apply(double score, const CalibrationParams& params) {
  const double z = params.a * score + params.b;
  // 1/(1+exp(z)), stable on both tails
  return z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

namespace {

double platt_nll(const std::vector<double>& scores, const std::vector<double>& targets, double a, double b) {
  double nll = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double z = a * scores[i] + b;
    // -t*log(p) - (1-t)*log(1-p) with p = 1/(1+exp(z)):
    //   log(p) = -log(1+exp(z)),  log(1-p) = z - log(1+exp(z))
    const double log1pez = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    nll += targets[i] * log1pez + (1.0 - targets[i]) * (log1pez - z);
  }
  return nll / static_cast<double>(scores.size());
}

}  // namespace

CalibrationParams platt_fit(const std::vector<ScoreRecord>& records, const std::string& modality,
                            int max_iterations, double tolerance) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const ScoreRecord& r : records) {
    if (!r.label.has_value()) raise(Errc::BadFormat, "platt_fit requires labeled records");
    scores.push_back(r.score);
    labels.push_back(*r.label);
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) raise(Errc::SingleClass, "platt_fit needs both classes");

  const double t_pos = (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_pos) + 2.0);
  const double t_neg = 1.0 / (static_cast<double>(n_neg) + 2.0);
  std::vector<double> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = labels[i] == 1 ? t_pos : t_neg;

  const double n = static_cast<double>(scores.size());
  double a = 0.0, b = 0.0;
  double nll = platt_nll(scores, targets, a, b);
  double grad_norm = 0.0;
  for (int iter = 0; iter < max_iterations; ++iter) {
    // p = 1/(1+exp(a*s+b)); dNLL/dz = (p - t) ... with z = a*s+b the mean-NLL
    // gradient is sum((t - p) * ds)/n in -z direction; see Hessian below
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores[i];
      const double p = platt_apply(s, {a, b, modality});
      const double d = targets[i] - p;  // dNLL/dz
      ga += d * s;
      gb += d;
      const double w = p * (1.0 - p);
      haa += w * s * s;
      hab += w * s;
      hbb += w;
    }
    ga /= n;
    gb /= n;
    haa /= n;
    hab /= n;
    hbb /= n;
    grad_norm = std::sqrt(ga * ga + gb * gb);
    if (grad_norm < tolerance) return {a, b, modality};

    double det = haa * hbb - hab * hab;
    if (std::abs(det) < 1e-300) {
      haa += 1e-12;
      hbb += 1e-12;
      det = haa * hbb - hab * hab;
    }
    double da = -(hbb * ga - hab * gb) / det;
    double db = -(haa * gb - hab * ga) / det;

    // halve the step while it does not improve the mean NLL
    double step = 1.0;
    for (int ls = 0; ls < 50; ++ls) {
      const double cand = platt_nll(scores, targets, a + step * da, b + step * db);
      if (cand <= nll + 1e-15) {
        a += step * da;
        b += step * db;
        nll = cand;
        break;
      }
      step *= 0.5;
    }
  }
  // converged well enough if the remaining gradient is tiny in absolute terms
  if (grad_norm >= tolerance)
    raise(Errc::NonConvergence,
          "platt_fit did not converge: final gradient norm " + std::to_string(grad_norm));
  return {a, b, modality};
}

double max_out(std::optional<double> p_audio, std::optional<double> p_video) {
  if (!p_audio.has_value() && !p_video.has_value()) raise(Errc::BothAbsent, "max_out with no modality present");
  if (!p_audio.has_value()) return *p_video;
  if (!p_video.has_value()) return *p_audio;
  return std::max(*p_audio, *p_video);
}

std::vector<CalibrationBin> calibration_curve(const std::vector<ScoreRecord>& records,
                                              const CalibrationParams& params, int bins) {
  std::vector<CalibrationBin> table(static_cast<std::size_t>(bins));
  std::vector<double> pred_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> pos_sum(static_cast<std::size_t>(bins), 0.0);
  for (const ScoreRecord& r : records) {
    if (!r.label.has_value()) raise(Errc::BadFormat, "calibration_curve requires labeled records");
    const double p = platt_apply(r.score, params);
    int bin = static_cast<int>(p * bins);
    bin = std::clamp(bin, 0, bins - 1);
    pred_sum[bin] += p;
    pos_sum[bin] += *r.label;
    ++table[bin].count;
  }
  for (int i = 0; i < bins; ++i) {
    if (table[i].count > 0) {
      table[i].mean_predicted = pred_sum[i] / static_cast<double>(table[i].count);
      table[i].empirical_fraction = pos_sum[i] / static_cast<double>(table[i].count);
    }
  }
  return table;
}

std::vector<ScoreRecord> read_scores_csv(const std::string& path, bool require_labels, bool reject_duplicates) {
  std::ifstream in(path);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  std::vector<ScoreRecord> records;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = [&] { return path + ":" + std::to_string(line_no); };
    const std::size_t p1 = line.find(';');
    if (p1 == std::string::npos) raise(Errc::BadFormat, where() + ": expected video_id;score[;label]");
    ScoreRecord r;
    r.video_id = line.substr(0, p1);
    const std::size_t p2 = line.find(';', p1 + 1);
    try {
      if (p2 == std::string::npos) {
        r.score = std::stod(line.substr(p1 + 1));
      } else {
        r.score = std::stod(line.substr(p1 + 1, p2 - p1 - 1));
        const int label = std::stoi(line.substr(p2 + 1));
        if (label != 0 && label != 1) raise(Errc::BadFormat, where() + ": label must be 0 or 1");
        r.label = label;
      }
    } catch (const std::invalid_argument&) {
      raise(Errc::BadFormat, where() + ": malformed number");
    } catch (const std::out_of_range&) {
      raise(Errc::BadFormat, where() + ": number out of range");
    }
    if (require_labels && !r.label.has_value()) raise(Errc::BadFormat, where() + ": missing label");
    if (reject_duplicates && !seen.insert(r.video_id).second)
      raise(Errc::DuplicateVideoId, where() + ": duplicate video id " + r.video_id);
    records.push_back(std::move(r));
  }
  return records;
}

void write_scores_csv(const std::string& path, const std::vector<ScoreRecord>& records) {
  std::ofstream out(path);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  char buf[32];
  for (const ScoreRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.score);
    out << r.video_id << ';' << buf;
    if (r.label.has_value()) out << ';' << *r.label;
    out << '\n';
  }
}

CalibrationParams read_calibration_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("a") || !j.contains("b") || !j.contains("modality"))
    raise(Errc::BadFormat, path + ": expected {\"a\", \"b\", \"modality\"}");
  return {j["a"].get<double>(), j["b"].get<double>(), j["modality"].get<std::string>()};
}

void write_calibration_json(const std::string& path, const CalibrationParams& params) {
  nlohmann::json j{{"a", params.a}, {"b", params.b}, {"modality", params.modality}};
  std::ofstream out(path);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace klassify
