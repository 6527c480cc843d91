#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avicurate/audio_io.hpp"

namespace avicurate {

struct SegmentConfig {
  double window_s = 3.0;
  double step_s = 0.1;
  double min_rms = 0.001;
  double min_separation_s = 1.5;  // start-to-start
  double skip_head_s = 3.0;
  double skip_if_longer_than_s = 12.0;
  int sample_rate = kSampleRate;

  Eigen::Index window_samples() const { return to_samples(window_s); }
  Eigen::Index step_samples() const { return to_samples(step_s); }
  Eigen::Index separation_samples() const { return to_samples(min_separation_s); }
  Eigen::Index to_samples(double s) const { return static_cast<Eigen::Index>(std::llround(s * sample_rate)); }
};

struct SegmentCandidate {
  Eigen::Index start_sample = 0;
  double start_s = 0.0;
  double rms = 0.0;
  std::int64_t source_catalog_id = 0;
};

// One candidate per step-aligned window that fits in the recording. Start
// positions inside the first skip_head_s are dropped for recordings longer
// than skip_if_longer_than_s; the audio itself is not trimmed.
std::vector<SegmentCandidate> scan_windows(const ClipBuffer& rec, std::int64_t catalog_id = 0,
                                           const SegmentConfig& config = {});

// Greedy by descending RMS (earliest start on ties). A candidate is taken
// only if its start is at least min_separation_s from every accepted start
// and from every start in `occupied`. max_clips == 0 means no limit.
std::vector<SegmentCandidate> select_clips(std::vector<SegmentCandidate> candidates, std::size_t max_clips = 0,
                                           const SegmentConfig& config = {},
                                           std::span<const Eigen::Index> occupied = {});

struct ExtractedClip {
  ClipBuffer clip;
  Eigen::Index start_sample = 0;
  bool clipped = false;  // repair_clipping was applied
};

ExtractedClip extract(const ClipBuffer& rec, const SegmentCandidate& candidate, const SegmentConfig& config = {});
ExtractedClip extract_at(const ClipBuffer& rec, double start_s, const SegmentConfig& config = {});

// "XC<id>_<start_ms>"
std::string clip_stem(std::int64_t catalog_id, double start_s);

}  // namespace avicurate
