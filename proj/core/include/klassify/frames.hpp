#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

namespace klassify {

// Raw RGB24 frame stream, row-major per frame, 8 bits per channel.
struct FrameTensorStream {
  int t = 0;
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // t*h*w*3 bytes

  void validate() const;

  const std::uint8_t* frame(int i) const { return data.data() + static_cast<std::size_t>(i) * h * w * 3; }
  std::uint8_t* frame(int i) { return data.data() + static_cast<std::size_t>(i) * h * w * 3; }

  std::uint8_t pixel(int i, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(i) * h + y) * w + x) * 3 + c];
  }
  std::uint8_t& pixel(int i, int y, int x, int c) {
    return data[((static_cast<std::size_t>(i) * h + y) * w + x) * 3 + c];
  }
};

// Reads exactly `t` frames of w*h RGB24. Throws TruncatedStream with the
// expected and received byte counts if the stream ends early or has
// trailing bytes (when `expect_eof`).
FrameTensorStream read_raw_rgb24(std::istream& in, int t, int w, int h, bool expect_eof = true);
FrameTensorStream read_raw_rgb24_file(const std::string& path, int t, int w, int h);
void write_raw_rgb24_file(const std::string& path, const FrameTensorStream& s);

}  // namespace klassify
