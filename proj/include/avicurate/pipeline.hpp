#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "avicurate/audit.hpp"
#include "avicurate/balance.hpp"
#include "avicurate/catalog.hpp"
#include "avicurate/dedup.hpp"
#include "avicurate/negatives.hpp"
#include "avicurate/segment.hpp"

namespace avicurate {

struct CatalogConfig {
  std::string endpoint = "https://xeno-canto.org/api/3/recordings";
  std::string group = "birds";
  std::vector<std::string> countries{"Malaysia", "Indonesia", "Singapore", "Brunei", "Thailand"};
  std::string api_key_env = "XC_API_KEY";
  bool offline = false;
  double politeness_delay_s = 1.0;
  double min_duration_s = 3.0;
  RetryPolicy retry;
};

struct DedupConfig {
  int k = 6;
  DedupThresholds thresholds;
};

struct ExtractConfig {
  SegmentConfig segment;
  std::size_t max_clips_per_recording = 0;  // 0 keeps every admissible clip
};

struct NegativesConfig {
  std::filesystem::path root;  // contains one folder per source
  std::vector<NegativeSourceSpec> sources;
  QualityGate gate;
};

struct AuditConfig {
  double p_hat = 0.04;
  double margin = 0.015;
  double z = 1.96;
  std::vector<std::uint64_t> round_seeds{42, 43};
  std::optional<std::size_t> sample_size;  // overrides the Cochran size
  std::string host = "127.0.0.1";
  int port = 8750;
  std::string token_env = "AVICURATE_AUDIT_TOKEN";
};

// Every stage parameter, with the published values as defaults.
struct RunConfig {
  std::string profile = "paper";  // "paper" or "custom"
  std::uint64_t seed = 42;
  int jobs = 4;
  CatalogConfig catalog;
  DedupConfig dedup;
  ExtractConfig extract;
  BalanceConfig balance;
  NegativesConfig negatives;
  SplitRatios split;
  AuditConfig audit;
};

RunConfig paper_profile();

// Relative paths inside the document resolve against `base_dir`. Missing
// keys keep their defaults; unknown keys and bad values are ConfigInvalid.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);
void validate(const RunConfig& config);

// Dependency graph, in a valid execution order.
const std::vector<std::string>& stage_names();
const std::vector<std::string>& stage_dependencies(const std::string& stage);

struct StageReport {
  std::string stage;
  std::string status;  // "completed" or "skipped"
  std::string fingerprint;
  double seconds = 0.0;
  nlohmann::json details;
};

struct RunOptions {
  bool force = false;
  int jobs = 0;  // 0 uses the config value
  int audit_round = 0;  // 0 means the next unplanned round
  bool audit_grids = false;
};

// A build directory plus its run manifest (run_manifest.json), which records
// the resolved config and, per stage, the fingerprint of its inputs and
// every file it wrote. A stage whose fingerprint and outputs are unchanged
// is skipped unless forced.
//
// Layout under the root:
//   metadata/   catalog pages, raw and filtered metadata
//   recordings/ 16 kHz mono FLAC per catalog id
//   dedup/      duplicate report and surviving corpus
//   extract/    positive clips, extraction log, clip embeddings
//   balance/    selected positives
//   negatives/  gated negative clips and their manifest
//   dataset/    released clips and manifest.csv
//   audit/      per-round plans, grids and verdict logs
//   reports/    one JSON report per stage
class Workspace {
 public:
  Workspace(std::filesystem::path root, RunConfig config);

  const std::filesystem::path& root() const { return root_; }
  const RunConfig& config() const { return config_; }

  StageReport run(const std::string& stage, const RunOptions& options = {});

  // Runs every stage in dependency order (audit excluded).
  std::vector<StageReport> run_all(const RunOptions& options = {});

  // Table-style dataset statistics from whatever stages have completed.
  nlohmann::json report() const;

  // Audit round `round` (0 = latest planned) as a live session whose
  // remediations are written back to dataset/manifest.csv.
  std::unique_ptr<AuditSession> open_audit(int round = 0);

  std::filesystem::path dataset_manifest() const { return root_ / "dataset" / "manifest.csv"; }
  nlohmann::json run_manifest() const;

 private:
  struct StageContext;

  std::string fingerprint(const std::string& stage, const RunOptions& options) const;
  bool up_to_date(const std::string& stage, const std::string& fp) const;
  void record(const std::string& stage, const std::string& fp, const std::vector<std::filesystem::path>& outputs,
              const StageReport& report);
  void save_manifest() const;
  void apply_remediation(const Remediation& r);

  std::filesystem::path root_;
  RunConfig config_;
  nlohmann::json manifest_;
  mutable std::mutex mu_;
};

}  // namespace avicurate
