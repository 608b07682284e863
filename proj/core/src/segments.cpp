#include "klassify/segments.hpp"

#include <algorithm>
#include <cmath>

#include "klassify/errors.hpp"

namespace klassify {

void validate_segments(const SegmentSet& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Segment& seg = s[i];
    if (!(seg.start >= 0.0) || !(seg.start < seg.end))
      raise(Errc::BadFormat, "segment " + std::to_string(i) + " violates 0 <= start < end");
    if (!std::isfinite(seg.score)) raise(Errc::BadFormat, "segment " + std::to_string(i) + " has non-finite score");
    if (i > 0 && s[i - 1].start > seg.start) raise(Errc::BadFormat, "segments not sorted by start");
  }
}

SegmentSet merge_overlapping(const SegmentSet& s) {
  SegmentSet sorted = s;
  std::sort(sorted.begin(), sorted.end(), [](const Segment& a, const Segment& b) {
    return a.start < b.start || (a.start == b.start && a.end < b.end);
  });
  SegmentSet out;
  for (const Segment& seg : sorted) {
    if (!out.empty() && seg.start < out.back().end) {
      out.back().end = std::max(out.back().end, seg.end);
      out.back().score = std::max(out.back().score, seg.score);
    } else {
      out.push_back(seg);
    }
  }
  return out;
}

bool has_overlap(const SegmentSet& sorted) {
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].start < sorted[i - 1].end) return true;
  return false;
}

}  // namespace klassify
