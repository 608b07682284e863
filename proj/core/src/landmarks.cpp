#include "klassify/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace klassify {

using nlohmann::json;

void LandmarkSequence::validate() const {
  if (frames.empty()) raise(Errc::BadFormat, "landmark sequence is empty");
  const std::size_t n_points = frames[0].points.size();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const LandmarkFrame& f = frames[i];
    if (f.frame_index != static_cast<int>(i))
      raise(Errc::BadFormat,
            "frame index " + std::to_string(f.frame_index) + " at position " + std::to_string(i) + ", expected contiguous indices from 0");
    if (f.points.size() != n_points)
      raise(Errc::BadFormat, "frame " + std::to_string(i) + " has " + std::to_string(f.points.size()) +
                                 " points, expected " + std::to_string(n_points));
    for (const Point2& p : f.points)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        raise(Errc::BadFormat, "non-finite landmark coordinate in frame " + std::to_string(i));
  }
}

int LipConfig::max_index() const {
  int m = std::max({top, bottom, left, right});
  for (int i : lips) m = std::max(m, i);
  return m;
}

LandmarkSequence read_landmarks_jsonl(const std::string& path, double fps) {
  std::ifstream in(path);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  LandmarkSequence seq;
  seq.fps = fps;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("frame") || !j.contains("w") || !j.contains("h") ||
        !j.contains("pts"))
      raise(Errc::BadFormat, path + ":" + std::to_string(line_no) + ": expected {\"frame\",\"w\",\"h\",\"pts\"}");
    LandmarkFrame f;
    f.frame_index = j["frame"].get<int>();
    f.width = j["w"].get<int>();
    f.height = j["h"].get<int>();
    for (const auto& p : j["pts"]) {
      if (!p.is_array() || p.size() < 2)
        raise(Errc::BadFormat, path + ":" + std::to_string(line_no) + ": point must be [x,y]");
      // optional z ignored
      f.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    seq.frames.push_back(std::move(f));
  }
  try {
    seq.validate();
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
  return seq;
}

void write_landmarks_jsonl(const std::string& path, const LandmarkSequence& seq) {
  std::ofstream out(path);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  char buf[64];
  for (const LandmarkFrame& f : seq.frames) {
    out << "{\"frame\":" << f.frame_index << ",\"w\":" << f.width << ",\"h\":" << f.height << ",\"pts\":[";
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "[%.9g,%.9g]", f.points[i].x, f.points[i].y);
      out << (i ? "," : "") << buf;
    }
    out << "]}\n";
  }
}

LipConfig read_lip_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("lips") || !j.contains("top") || !j.contains("bottom") ||
      !j.contains("left") || !j.contains("right"))
    raise(Errc::BadFormat, path + ": expected {\"lips\",\"top\",\"bottom\",\"left\",\"right\"}");
  LipConfig cfg;
  cfg.lips = j["lips"].get<std::vector<int>>();
  cfg.top = j["top"].get<int>();
  cfg.bottom = j["bottom"].get<int>();
  cfg.left = j["left"].get<int>();
  cfg.right = j["right"].get<int>();
  if (cfg.lips.empty()) raise(Errc::BadFormat, path + ": lip index list is empty");
  for (int i : cfg.lips)
    if (i < 0) raise(Errc::BadFormat, path + ": negative lip index");
  return cfg;
}

void write_lip_config(const std::string& path, const LipConfig& cfg) {
  json j;
  j["lips"] = cfg.lips;
  j["top"] = cfg.top;
  j["bottom"] = cfg.bottom;
  j["left"] = cfg.left;
  j["right"] = cfg.right;
  std::ofstream out(path);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace klassify
