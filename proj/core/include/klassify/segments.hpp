#pragma once

#include <string>
#include <vector>

namespace klassify {

// Scored time interval in seconds. Ground truth carries score 1.
struct Segment {
  double start = 0.0;
  double end = 0.0;
  double score = 1.0;
};

using SegmentSet = std::vector<Segment>;

// 0 <= start < end, sorted by start, finite scores
void validate_segments(const SegmentSet& s);

// Sorts by start and merges segments with positive-measure overlap.
SegmentSet merge_overlapping(const SegmentSet& s);

bool has_overlap(const SegmentSet& sorted);

}  // namespace klassify
