#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avicurate/audio_io.hpp"
#include "avicurate/dsp.hpp"

namespace avicurate {

enum class NegativeSource { BirdVox, Freefield1010, Warblr, Fsc22, Esc50, DataSec };
enum class SegmentPolicy { CenterCrop, HighestRmsWindow, PadOrCrop };

std::string_view to_string(NegativeSource s) noexcept;
std::string_view to_string(SegmentPolicy p) noexcept;
NegativeSource parse_negative_source(std::string_view s);
SegmentPolicy parse_segment_policy(std::string_view s);

struct NegativeSourceSpec {
  NegativeSource name = NegativeSource::BirdVox;
  std::filesystem::path root;
  std::vector<std::string> excluded_classes;
  std::size_t quota = 0;
  SegmentPolicy policy = SegmentPolicy::CenterCrop;
  // Categories drawn from first when the quota forces a choice. Anything not
  // listed follows in alphabetical order.
  std::vector<std::string> category_priority;
  std::optional<std::size_t> category_cap;
};

// The six sources with the published quotas (25,000 in total), exclusions and
// segmentation policies, rooted at <root>/<source name>.
std::vector<NegativeSourceSpec> paper_negative_sources(const std::filesystem::path& root);

struct NegativeCandidate {
  NegativeSource source = NegativeSource::BirdVox;
  std::string source_file;  // relative to the source root
  std::string class_label;
  double duration_s = 0.0;
  std::filesystem::path audio_path;
};

struct LoadStats {
  std::size_t listed = 0;
  std::size_t excluded = 0;
  std::size_t missing_audio = 0;
};

// Reads a source in its published layout:
//   DCASE sets: a metadata CSV with itemid and hasbird, audio in wav/<itemid>.wav
//   ESC-50:     meta/esc50.csv (filename, category), audio under audio/
//   FSC-22:     a CSV with "Dataset File Name" and "Class Name", audio anywhere below
//   DataSEC:    one folder per category
// Only bird-absent, non-excluded rows come back, sorted by source_file.
std::vector<NegativeCandidate> load_source(const NegativeSourceSpec& spec, LoadStats* stats = nullptr);

struct SegmentedNegative {
  ClipBuffer clip;
  double start_s = 0.0;
};

// Always returns exactly three seconds.
SegmentedNegative segment_negative(const ClipBuffer& clip, SegmentPolicy policy);

struct QualityGate {
  double min_rms = 0.0001;
  double max_peak = 0.98;
  double min_dynamic_range = 0.1;

  void validate() const;
};

struct GateResult {
  bool pass = false;
  std::string reason;  // first failed check, empty on pass
  FeatureSummary features;
};

GateResult quality_filter(const ClipBuffer& clip, const QualityGate& gate = {});

// One gated negative clip; also the manifest row.
struct NegativeClip {
  std::string clip_id;
  NegativeSource source = NegativeSource::BirdVox;
  std::string source_file;
  std::string class_label;
  SegmentPolicy policy = SegmentPolicy::CenterCrop;
  double start_s = 0.0;
  double rms = 0.0;
  double peak = 0.0;
  double dynamic_range = 0.0;
  double salience = 0.0;
};

std::string negative_clip_id(NegativeSource source, std::string_view source_file);

// Decode, resample, segment and gate one candidate. nullopt when the gate
// rejects it; undecodable files throw.
std::optional<NegativeClip> curate_candidate(const NegativeCandidate& candidate, SegmentPolicy policy,
                                             const QualityGate& gate, ClipBuffer* clip_out = nullptr);

struct AllocationPlan {
  std::string category;
  std::size_t available = 0;
  std::size_t taken = 0;
};

struct SourceAllocation {
  NegativeSource source = NegativeSource::BirdVox;
  std::size_t cap = 0;
  std::vector<AllocationPlan> categories;  // priority order
};

// Per source: categories in priority order, each capped, oversized ones
// subsampled without replacement under `seed`, then trimmed from the
// lowest-priority end until the source total equals its quota.
// Output is sorted by (source order in `specs`, clip_id).
std::vector<NegativeClip> allocate_and_diversify(const std::vector<NegativeClip>& candidates,
                                                 const std::vector<NegativeSourceSpec>& specs, std::uint64_t seed,
                                                 std::vector<SourceAllocation>* plan = nullptr);

// Smallest cap c with sum(min(supply_i, c)) >= quota, but never below
// ceil(quota / n_categories). Throws InsufficientSupply if no cap works.
std::size_t default_category_cap(const std::vector<std::size_t>& supply, std::size_t quota);

void write_negative_manifest(const std::filesystem::path& path, const std::vector<NegativeClip>& clips);
std::vector<NegativeClip> read_negative_manifest(const std::filesystem::path& path);

}  // namespace avicurate
