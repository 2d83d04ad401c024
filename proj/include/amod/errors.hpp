#pragma once

#include <stdexcept>
#include <string>

namespace amod {

// Base for all domain errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define AMOD_DEFINE_ERROR(NAME)                                   \
  struct NAME : Error {                                           \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

AMOD_DEFINE_ERROR(ParseError);
AMOD_DEFINE_ERROR(ValidationError);
AMOD_DEFINE_ERROR(InvalidSpec);
AMOD_DEFINE_ERROR(StationIndexError);
AMOD_DEFINE_ERROR(DimensionMismatch);
AMOD_DEFINE_ERROR(SimplexViolation);
AMOD_DEFINE_ERROR(InfeasibleError);
AMOD_DEFINE_ERROR(EpisodeDone);
AMOD_DEFINE_ERROR(ShapeMismatch);
AMOD_DEFINE_ERROR(NonFiniteGradient);
AMOD_DEFINE_ERROR(NonFiniteOutput);
AMOD_DEFINE_ERROR(UnknownVariant);
AMOD_DEFINE_ERROR(EmptyBatch);
AMOD_DEFINE_ERROR(MissingReferenceValues);
AMOD_DEFINE_ERROR(BrokenEpisode);
AMOD_DEFINE_ERROR(PolicyFailure);
AMOD_DEFINE_ERROR(IoError);
AMOD_DEFINE_ERROR(VersionMismatch);
AMOD_DEFINE_ERROR(ChecksumMismatch);
AMOD_DEFINE_ERROR(EmptyDataset);
AMOD_DEFINE_ERROR(ConfigError);
AMOD_DEFINE_ERROR(DatasetMissing);
AMOD_DEFINE_ERROR(CheckpointMissing);
AMOD_DEFINE_ERROR(FeatureWidthMismatch);
AMOD_DEFINE_ERROR(IncomparableLogs);
AMOD_DEFINE_ERROR(HorizonExceedsData);

#undef AMOD_DEFINE_ERROR

// Always-on invariant check (not compiled out in release builds).
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error("invariant violated: " + msg);
}

}  // namespace amod
