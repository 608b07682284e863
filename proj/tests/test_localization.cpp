#include <cmath>

#include "doctest.h"
#include "klassify/localization.hpp"
#include "klassify/rng.hpp"
#include "klassify/training.hpp"

using namespace klassify;
using nn::Tensor;

TEST_CASE("plan_windows arithmetic") {
  SUBCASE("T=512 gives starts 0,128,256") {
    const WindowPlan p = plan_windows(512);
    CHECK(p.starts == std::vector<int>{0, 128, 256});
  }
  SUBCASE("T=100 single whole-clip window") {
    const WindowPlan p = plan_windows(100);
    CHECK(p.starts == std::vector<int>{0});
  }
  SUBCASE("T=300 right-aligns the final window") {
    const WindowPlan p = plan_windows(300);
    CHECK(p.starts == std::vector<int>{0, 44});
  }
  SUBCASE("every frame covered for T in [1, 5000]") {
    for (int t_total = 1; t_total <= 5000; ++t_total) {
      const WindowPlan p = plan_windows(t_total);
      REQUIRE_FALSE(p.starts.empty());
      // starts strictly increasing
      for (std::size_t i = 1; i < p.starts.size(); ++i) REQUIRE(p.starts[i] > p.starts[i - 1]);
      std::vector<bool> covered(static_cast<std::size_t>(t_total), false);
      for (int s : p.starts)
        for (int f = s; f < std::min(t_total, s + p.window); ++f) covered[f] = true;
      for (int f = 0; f < t_total; ++f) REQUIRE(covered[f]);
    }
  }
}

TEST_CASE("aggregate_classification is the arithmetic mean with invariants") {
  CHECK(aggregate_classification({0.7}) == 0.7);
  CHECK(aggregate_classification({0.2, 0.4, 0.9}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(aggregate_classification({0.3, 0.3, 0.3, 0.3}) == doctest::Approx(0.3).epsilon(1e-15));

  Rng rng(301);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> scores;
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 9));
    for (int i = 0; i < n; ++i) scores.push_back(rng.uniform());
    const double mean = aggregate_classification(scores);
    double lo = scores[0], hi = scores[0];
    for (double s : scores) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    CHECK(mean >= lo);
    CHECK(mean <= hi);
    // permutation invariance
    std::vector<double> shuffled = scores;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(aggregate_classification(shuffled) == doctest::Approx(mean).epsilon(1e-15));
  }
}

namespace {

Tensor one_hot_tags(const std::vector<int>& tags) {
  Tensor probs(static_cast<int>(tags.size()), 4);
  for (std::size_t t = 0; t < tags.size(); ++t) probs.at(static_cast<int>(t), tags[t]) = 1.0;
  return probs;
}

}  // namespace

TEST_CASE("aggregate_frame_probs averages covering windows") {
  WindowPlan plan;
  plan.window = 4;
  plan.total_frames = 6;
  plan.starts = {0, 2};

  Tensor w0(4, 4), w1(4, 4);
  Rng rng(302);
  auto fill_softmax_rows = [&](Tensor& w) {
    for (int t = 0; t < w.rows(); ++t) {
      double sum = 0.0;
      for (int c = 0; c < 4; ++c) {
        w.at(t, c) = rng.uniform() + 0.01;
        sum += w.at(t, c);
      }
      for (int c = 0; c < 4; ++c) w.at(t, c) /= sum;
    }
  };
  fill_softmax_rows(w0);
  fill_softmax_rows(w1);

  const Tensor out = aggregate_frame_probs({w0, w1}, plan);
  // per-frame averaging oracle
  for (int f = 0; f < 6; ++f) {
    double expect[4] = {0, 0, 0, 0};
    int cover = 0;
    if (f < 4) {
      for (int c = 0; c < 4; ++c) expect[c] += w0.at(f, c);
      ++cover;
    }
    if (f >= 2) {
      for (int c = 0; c < 4; ++c) expect[c] += w1.at(f - 2, c);
      ++cover;
    }
    double sum = 0.0;
    for (int c = 0; c < 4; ++c) {
      expect[c] /= cover;
      sum += expect[c];
    }
    for (int c = 0; c < 4; ++c) CHECK(out.at(f, c) == doctest::Approx(expect[c] / sum).epsilon(1e-12));
  }

  SUBCASE("single window is the identity") {
    WindowPlan single;
    single.window = 4;
    single.total_frames = 4;
    single.starts = {0};
    const Tensor id = aggregate_frame_probs({w0}, single);
    for (int t = 0; t < 4; ++t)
      for (int c = 0; c < 4; ++c) CHECK(id.at(t, c) == doctest::Approx(w0.at(t, c)).epsilon(1e-12));
  }
  SUBCASE("two agreeing windows leave values unchanged") {
    WindowPlan both;
    both.window = 4;
    both.total_frames = 4;
    both.starts = {0, 0};
    const Tensor same = aggregate_frame_probs({w0, w0}, both);
    for (int t = 0; t < 4; ++t)
      for (int c = 0; c < 4; ++c) CHECK(same.at(t, c) == doctest::Approx(w0.at(t, c)).epsilon(1e-12));
  }
}

TEST_CASE("decode_tags basics") {
  SUBCASE("all O gives an empty set") {
    const Tensor probs = one_hot_tags({0, 0, 0, 0, 0});
    CHECK(decode_tags(probs, 25.0).empty());
  }
  SUBCASE("O O B I I L O O at 25 fps gives [0.08, 0.24)") {
    const Tensor probs = one_hot_tags({0, 0, 1, 2, 2, 3, 0, 0});
    const SegmentSet segs = decode_tags(probs, 25.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start == doctest::Approx(0.08).epsilon(1e-12));
    CHECK(segs[0].end == doctest::Approx(0.24).epsilon(1e-12));
    CHECK(segs[0].score == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("lone B is a single-frame segment") {
    const Tensor probs = one_hot_tags({0, 1, 0});
    const SegmentSet segs = decode_tags(probs, 25.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start == doctest::Approx(1.0 / 25.0));
    CHECK(segs[0].end == doctest::Approx(2.0 / 25.0));
  }
  SUBCASE("orphan I adjacent to a closed segment extends it") {
    const Tensor probs = one_hot_tags({1, 2, 3, 2, 0});  // B I L + orphan I
    const SegmentSet segs = decode_tags(probs, 25.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].end == doctest::Approx(4.0 / 25.0));
  }
  SUBCASE("isolated orphan L becomes a length-1 segment") {
    const Tensor probs = one_hot_tags({0, 3, 0, 0});
    const SegmentSet segs = decode_tags(probs, 25.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start == doctest::Approx(1.0 / 25.0));
    CHECK(segs[0].end == doctest::Approx(2.0 / 25.0));
  }
  SUBCASE("decoded segments are disjoint sorted and in range") {
    Rng rng(303);
    for (int iter = 0; iter < 200; ++iter) {
      const int t_len = 1 + static_cast<int>(rng.uniform_int(0, 39));
      std::vector<int> tags(static_cast<std::size_t>(t_len));
      for (int& tag : tags) tag = static_cast<int>(rng.uniform_int(0, 3));
      const SegmentSet segs = decode_tags(one_hot_tags(tags), 25.0);
      for (std::size_t i = 0; i < segs.size(); ++i) {
        CHECK(segs[i].start >= 0.0);
        CHECK(segs[i].end <= t_len / 25.0 + 1e-12);
        CHECK(segs[i].start < segs[i].end);
        if (i > 0) CHECK(segs[i].start >= segs[i - 1].end - 1e-12);
      }
    }
  }
}

TEST_CASE("encode then decode is the identity on separated frame-aligned segments") {
  Rng rng(304);
  const double fps = 25.0;
  for (int iter = 0; iter < 2000; ++iter) {
    const int t_len = 10 + static_cast<int>(rng.uniform_int(0, 290));
    // random frame-aligned segments separated by >= 1 real frame
    SegmentSet truth;
    int cursor = 0;
    while (true) {
      const int gap = 1 + static_cast<int>(rng.uniform_int(0, 20));
      const int len = 1 + static_cast<int>(rng.uniform_int(0, 12));
      const int first = cursor + gap;
      const int last = first + len - 1;
      if (last >= t_len) break;
      truth.push_back({first / fps, (last + 1) / fps, 1.0});
      cursor = last + 1;
    }
    const std::vector<int> tags = encode_tags(truth, t_len, fps);
    const SegmentSet decoded = decode_tags(
        [&] {
          Tensor probs(t_len, 4);
          for (int t = 0; t < t_len; ++t) probs.at(t, tags[t]) = 1.0;
          return probs;
        }(),
        fps);
    REQUIRE(decoded.size() == truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      CHECK(decoded[i].start == truth[i].start);
      CHECK(decoded[i].end == truth[i].end);
    }
  }
}
