#include "klassify/frames.hpp"

#include <fstream>

#include "klassify/errors.hpp"

namespace klassify {

void FrameTensorStream::validate() const {
  if (t < 1) raise(Errc::BadFormat, "frame stream needs at least one frame");
  if (h < 16 || w < 16) raise(Errc::BadFormat, "frame size must be at least 16x16");
  const std::size_t expected = static_cast<std::size_t>(t) * h * w * 3;
  if (data.size() != expected)
    raise(Errc::TruncatedStream, "expected " + std::to_string(expected) + " bytes, have " + std::to_string(data.size()));
}

FrameTensorStream read_raw_rgb24(std::istream& in, int t, int w, int h, bool expect_eof) {
  FrameTensorStream s;
  s.t = t;
  s.w = w;
  s.h = h;
  const std::size_t expected = static_cast<std::size_t>(t) * h * w * 3;
  s.data.resize(expected);
  in.read(reinterpret_cast<char*>(s.data.data()), static_cast<std::streamsize>(expected));
  const std::size_t got = static_cast<std::size_t>(in.gcount());
  if (got != expected)
    raise(Errc::TruncatedStream,
          "raw RGB24 stream: expected " + std::to_string(expected) + " bytes, received " + std::to_string(got));
  if (expect_eof) {
    char extra;
    if (in.read(&extra, 1))
      raise(Errc::TruncatedStream, "raw RGB24 stream: expected " + std::to_string(expected) +
                                       " bytes, received more (trailing data)");
  }
  s.validate();
  return s;
}

FrameTensorStream read_raw_rgb24_file(const std::string& path, int t, int w, int h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::BadFormat, "cannot open: " + path);
  return read_raw_rgb24(in, t, w, h);
}

void write_raw_rgb24_file(const std::string& path, const FrameTensorStream& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::BadFormat, "cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(s.data.data()), static_cast<std::streamsize>(s.data.size()));
  if (!out) raise(Errc::BadFormat, "write failed: " + path);
}

}  // namespace klassify
