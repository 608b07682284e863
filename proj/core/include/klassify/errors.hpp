#pragma once

#include <stdexcept>
#include <string>

namespace klassify {

enum class Errc {
  // data format: malformed files, bad magic, truncated streams
  BadFormat,
  TruncatedStream,
  DuplicateVideoId,
  // data semantics: well-formed inputs that violate a contract
  RoiTooSmall,
  ShapeMismatch,
  EmptyComplement,
  EmptyRoi,
  LengthMismatch,
  EmptyCorpus,
  DegenerateSplit,
  LabelSegmentMismatch,
  OverlapError,
  SingleClass,
  NonConvergence,
  BothAbsent,
  CoverageGap,
  NoGroundTruth,
  NoTape,
  FpsMismatch,
  // model files
  ModelKindMismatch,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::BadFormat: return "BadFormat";
    case Errc::TruncatedStream: return "TruncatedStream";
    case Errc::DuplicateVideoId: return "DuplicateVideoId";
    case Errc::RoiTooSmall: return "RoiTooSmall";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyComplement: return "EmptyComplement";
    case Errc::EmptyRoi: return "EmptyRoi";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::DegenerateSplit: return "DegenerateSplit";
    case Errc::LabelSegmentMismatch: return "LabelSegmentMismatch";
    case Errc::OverlapError: return "OverlapError";
    case Errc::SingleClass: return "SingleClass";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::BothAbsent: return "BothAbsent";
    case Errc::CoverageGap: return "CoverageGap";
    case Errc::NoGroundTruth: return "NoGroundTruth";
    case Errc::NoTape: return "NoTape";
    case Errc::FpsMismatch: return "FpsMismatch";
    case Errc::ModelKindMismatch: return "ModelKindMismatch";
  }
  return "Unknown";
}

[[noreturn]] inline void raise(Errc code, const std::string& what) {
  throw Error(code, std::string(errc_name(code)) + ": " + what);
}

}  // namespace klassify
