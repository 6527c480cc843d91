#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avicurate/audio_io.hpp"
#include "avicurate/http.hpp"

namespace avicurate {

struct MetadataQuery {
  std::string group = "birds";
  std::vector<std::string> countries;
  std::string api_key;
};

struct FetchOptions {
  // Base of the recordings resource, e.g. https://xeno-canto.org/api/3/recordings
  std::string endpoint;
  // Raw pages land here and are replayed on the next run instead of hitting
  // the network. Empty disables caching.
  std::filesystem::path cache_dir;
  bool offline = false;  // cache misses become errors
  double politeness_delay_s = 0.0;
  RetryPolicy retry;
};

struct FetchReport {
  std::size_t pages_fetched = 0;
  std::size_t pages_from_cache = 0;
  std::size_t retries = 0;
  std::size_t records = 0;
};

struct CatalogPage {
  std::vector<RecordingMeta> records;
  int page = 1;
  int num_pages = 1;
};

// One page of a v3-style response: {"numPages", "page", "recordings": [...]}
// with string-valued id, gen, sp, en, cnt, lat, lon, q, length, file, lic.
CatalogPage parse_catalog_page(std::string_view json_text);

// "m:ss" or "h:mm:ss" to seconds.
double parse_length(std::string_view s);

// File name of one cached page: <group>_<country>_pNNNN.json, lowercased
// with non-alphanumerics folded to '-'.
std::string cached_name(const std::string& group, const std::string& country, int page);

// All pages for every country, in catalog-id order. A file:// endpoint
// names a directory of recorded pages in the cache naming scheme; a country
// without a first page there contributes nothing.
std::vector<RecordingMeta> fetch_metadata(const MetadataQuery& query, const FetchOptions& options,
                                          FetchReport* report = nullptr);

struct FilterReport {
  std::size_t total_in = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> excluded;  // reason -> count
};

// Placeholder names the catalog uses for unidentified recordings.
bool is_unresolved_species(const RecordingMeta& r);

// Reasons, checked in order: unresolved_species, missing_url, too_short.
std::vector<RecordingMeta> filter_metadata(const std::vector<RecordingMeta>& records, FilterReport* report = nullptr,
                                           double min_duration_s = 3.0);

void write_metadata_csv(const std::filesystem::path& path, const std::vector<RecordingMeta>& records);
std::vector<RecordingMeta> read_metadata_csv(const std::filesystem::path& path);

// One row of the released manifest.
struct ClipRecord {
  std::string clip_id;
  int label = 1;  // 1 bird present, 0 absent
  std::string source;  // "xeno-canto" or the negative dataset name
  std::int64_t catalog_id = 0;
  std::string species;
  std::string country;
  std::optional<double> latitude;
  std::optional<double> longitude;
  std::string quality;
  double start_s = 0.0;
  double salience = 0.0;
  int cluster_id = -1;
  std::string split;
  std::string license;
  std::string source_file;
  std::string path;  // clip file relative to the dataset root
};

void write_manifest(const std::filesystem::path& path, const std::vector<ClipRecord>& clips);
std::vector<ClipRecord> read_manifest(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitAssignment {
  std::string clip_id;
  std::string split;
};

// Clips sharing a source recording form one group and land in one split.
// Per label, groups are shuffled under `seed`, ordered largest first, and
// each goes to the split with the largest remaining deficit. With singleton
// groups every label hits round(n*val), round(n*test) and the remainder
// exactly.
std::vector<SplitAssignment> make_splits(const std::vector<ClipRecord>& clips, const SplitRatios& ratios,
                                         std::uint64_t seed);

// Key that ties clips of one source recording together.
std::string recording_group(const ClipRecord& c);

}  // namespace avicurate
