#include "avicurate/segment.hpp"

#include <algorithm>
#include <cmath>

#include "avicurate/dsp.hpp"
#include "avicurate/error.hpp"

namespace avicurate {

std::vector<SegmentCandidate> scan_windows(const ClipBuffer& rec, std::int64_t catalog_id,
                                           const SegmentConfig& config) {
  const Eigen::Index win = config.window_samples();
  const Eigen::Index step = config.step_samples();
  if (win <= 0 || step <= 0) throw Error(ErrorCode::InvalidArgument, "window and step must be positive");
  if (rec.size() < win) {
    throw Error(ErrorCode::TooShort, "recording of " + std::to_string(rec.duration_s()) + " s is shorter than a window");
  }

  const Eigen::Index n_windows = 1 + (rec.size() - win) / step;
  Eigen::Index first = 0;
  if (rec.duration_s() > config.skip_if_longer_than_s) {
    first = (config.to_samples(config.skip_head_s) + step - 1) / step;
  }

  // Sum of squares per step-sized block; a window is a run of whole blocks
  // when the step divides the window length.
  std::vector<double> energy(static_cast<std::size_t>(n_windows), 0.0);
  if (win % step == 0) {
    const Eigen::Index per_window = win / step;
    const Eigen::Index n_blocks = n_windows - 1 + per_window;
    std::vector<double> block(static_cast<std::size_t>(n_blocks));
    for (Eigen::Index b = 0; b < n_blocks; ++b) {
      block[b] = rec.samples.segment(b * step, step).cast<double>().square().sum();
    }
    for (Eigen::Index w = 0; w < n_windows; ++w) {
      double e = 0.0;
      for (Eigen::Index b = 0; b < per_window; ++b) e += block[w + b];
      energy[w] = e;
    }
  } else {
    for (Eigen::Index w = 0; w < n_windows; ++w) {
      energy[w] = rec.samples.segment(w * step, win).cast<double>().square().sum();
    }
  }

  std::vector<SegmentCandidate> out;
  out.reserve(static_cast<std::size_t>(std::max<Eigen::Index>(0, n_windows - first)));
  for (Eigen::Index w = first; w < n_windows; ++w) {
    SegmentCandidate c;
    c.start_sample = w * step;
    c.start_s = static_cast<double>(c.start_sample) / config.sample_rate;
    c.rms = std::sqrt(energy[w] / static_cast<double>(win));
    c.source_catalog_id = catalog_id;
    out.push_back(c);
  }
  return out;
}

std::vector<SegmentCandidate> select_clips(std::vector<SegmentCandidate> candidates, std::size_t max_clips,
                                           const SegmentConfig& config, std::span<const Eigen::Index> occupied) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const SegmentCandidate& a, const SegmentCandidate& b) {
    if (a.rms != b.rms) return a.rms > b.rms;
    return a.start_sample < b.start_sample;
  });
  const Eigen::Index sep = config.separation_samples();
  std::vector<Eigen::Index> taken(occupied.begin(), occupied.end());
  std::vector<SegmentCandidate> selected;
  for (const auto& c : candidates) {
    if (max_clips != 0 && selected.size() >= max_clips) break;
    if (c.rms < config.min_rms) break;  // sorted, nothing louder follows
    const bool clear = std::all_of(taken.begin(), taken.end(),
                                   [&](Eigen::Index s) { return std::abs(c.start_sample - s) >= sep; });
    if (!clear) continue;
    taken.push_back(c.start_sample);
    selected.push_back(c);
  }
  return selected;
}

ExtractedClip extract(const ClipBuffer& rec, const SegmentCandidate& candidate, const SegmentConfig& config) {
  const Eigen::Index win = config.window_samples();
  if (candidate.start_sample < 0 || candidate.start_sample + win > rec.size()) {
    throw Error(ErrorCode::OutOfRange, "window at " + std::to_string(candidate.start_s) + " s exceeds recording of " +
                                           std::to_string(rec.duration_s()) + " s");
  }
  ExtractedClip out;
  out.start_sample = candidate.start_sample;
  out.clip.sample_rate = rec.sample_rate;
  out.clip.samples = rec.samples.segment(candidate.start_sample, win);
  if (is_clipped(out.clip)) {
    out.clip = repair_clipping(out.clip);
    out.clipped = true;
  }
  return out;
}

ExtractedClip extract_at(const ClipBuffer& rec, double start_s, const SegmentConfig& config) {
  SegmentCandidate c;
  c.start_sample = config.to_samples(start_s);
  c.start_s = start_s;
  return extract(rec, c, config);
}

std::string clip_stem(std::int64_t catalog_id, double start_s) {
  return "XC" + std::to_string(catalog_id) + "_" + std::to_string(std::llround(start_s * 1000.0));
}

}  // namespace avicurate
