#pragma once

// Miniature on-disk layouts for the six negative sources and a small
// catalog corpus. Shared by the unit tests, the end-to-end test and the
// fixture tool.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "avicurate/audio_io.hpp"
#include "avicurate/negatives.hpp"

namespace fixtures {

namespace fs = std::filesystem;

extern const std::vector<std::string> kEsc50Classes;  // all 50
extern const std::vector<std::string> kFsc22Classes;  // 27, two of them avian

struct AudioStyle {
  double seconds = 0.25;
  int sample_rate = 8000;
  double rms = 0.08;
};

// DCASE layout: <root>/<csv_name> with itemid,datasetid,hasbird and wav/.
void write_mock_dcase(const fs::path& root, const std::string& csv_name, std::size_t n_negative,
                      std::size_t n_positive, const AudioStyle& style, std::uint64_t seed);
void write_mock_esc50(const fs::path& root, std::size_t per_class, const AudioStyle& style, std::uint64_t seed);
void write_mock_fsc22(const fs::path& root, std::size_t per_class, const AudioStyle& style, std::uint64_t seed);
// Durations cycle through 1.5 s .. 8 s so both padding and window search run.
void write_mock_datasec(const fs::path& root, const std::map<std::string, std::size_t>& per_category,
                        int sample_rate, std::uint64_t seed);

struct MockNegatives {
  std::vector<avicurate::NegativeSourceSpec> specs;
  std::size_t total_quota = 0;
};

// All six sources under root/<name>, about `per_source` bird-absent files
// each, with quotas that fit the supply and the published exclusions.
MockNegatives write_mock_negative_sources(const fs::path& root, std::size_t per_source, std::uint64_t seed);


// v3-style page with string-valued fields; file URLs point at
// <audio_base>/<catalog_id>.mp3 unless the record already carries one.
std::string catalog_page_json(const std::vector<avicurate::RecordingMeta>& records, int page, int num_pages);

// Local stand-in for the catalog API and its audio host.
class MockCatalogServer {
 public:
  MockCatalogServer();
  ~MockCatalogServer();
  MockCatalogServer(const MockCatalogServer&) = delete;
  MockCatalogServer& operator=(const MockCatalogServer&) = delete;

  // Pages for one country, served for page=1..N.
  void set_pages(const std::string& country, std::vector<std::string> pages);
  // Splits records into pages of `per_page`.
  void set_records(const std::string& country, const std::vector<avicurate::RecordingMeta>& records,
                   std::size_t per_page);
  // GET /audio/<file> serves files from this directory.
  void serve_audio_from(const fs::path& dir);
  // The next n API requests answer with `status`.
  void fail_next(int n, int status);

  std::string endpoint() const;    // .../api/3/recordings
  std::string audio_base() const;  // .../audio
  int api_requests() const { return api_requests_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<int> api_requests_{0};
};

}  // namespace fixtures
