#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avicurate/audio_io.hpp"
#include "avicurate/image.hpp"
#include "avicurate/segment.hpp"

namespace avicurate {

struct CochranSize {
  double n0_exact = 0.0;
  std::size_t n0 = 0;
  std::size_t n_star = 0;
};

// n0 = ceil(z^2 p(1-p) / e^2). The finite-population step divides the
// unrounded n0, which is what yields 639 (not 640) for p=0.04, e=0.015,
// N=25000.
CochranSize cochran(double p_hat, double margin, double z, std::size_t population);

struct AuditPlan {
  int round = 1;
  double p_hat = 0.0;
  double margin = 0.0;
  double z = 1.96;
  std::size_t population = 0;
  std::size_t n0 = 0;
  std::size_t n_star = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> sampled_clip_ids;  // draw order
};

// Draws n_star ids (or `sample_size` when given) uniformly without
// replacement from `population_ids`, skipping anything in `exclude` (clips
// audited in earlier rounds). N in the formula is population_ids.size().
AuditPlan plan_audit(double p_hat, double margin, double z, const std::vector<std::string>& population_ids,
                     std::uint64_t seed, std::optional<std::size_t> sample_size = std::nullopt, int round = 1,
                     const std::vector<std::string>& exclude = {});

std::string plan_to_json(const AuditPlan& plan);
AuditPlan plan_from_json(std::string_view text);

enum class Outcome { Correct, WrongOnset, NoiseDominated, NoBird };
std::string_view to_string(Outcome o) noexcept;
Outcome parse_outcome(std::string_view s);

struct AuditVerdict {
  std::string clip_id;
  Outcome outcome = Outcome::Correct;
  std::optional<double> corrected_start_s;
  std::string auditor;
  std::string timestamp;  // ISO 8601 UTC, filled in when empty
  int round = 1;
};

std::string utc_timestamp();

struct AuditSummary {
  std::vector<int> rounds;
  std::size_t population = 0;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double error_rate = 0.0;
  double margin = 0.0;  // half-width of the accuracy interval
  double z = 1.96;
  std::map<std::string, std::size_t> by_outcome;
  std::string caveat;
};

// z * sqrt(p(1-p)/n) * sqrt((N-n)/(N-1)).
double audit_margin(std::size_t correct, std::size_t n, std::size_t population, double z = 1.96);

AuditSummary summarize_counts(std::size_t correct, std::size_t n, std::size_t population, double z = 1.96);

// What the audit needs to find a positive clip and its source recording.
struct AuditClip {
  std::string clip_id;
  std::int64_t catalog_id = 0;
  double start_s = 0.0;
  std::filesystem::path clip_path;
  std::filesystem::path source_path;
};

struct Remediation {
  std::string action;  // "none", "reextracted", "replaced", "removed"
  std::string clip_id;
  std::string new_clip_id;
  double old_start_s = 0.0;
  double new_start_s = 0.0;
};

// One audit round over a plan. Verdicts go to an append-only CSV log that
// is fsynced before record() returns; constructing a session replays the
// log. Side effects (re-extraction, replacement) are applied to clip files
// and reported through `on_remediation` so the caller can update its
// manifest. Thread-safe.
class AuditSession {
 public:
  using RemediationHook = std::function<void(const Remediation&)>;

  AuditSession(AuditPlan plan, std::filesystem::path log_path, std::map<std::string, AuditClip> clips,
               SegmentConfig segment_config = {});

  const AuditPlan& plan() const { return plan_; }
  std::size_t judged() const;
  bool complete() const;
  std::map<std::string, AuditVerdict> verdicts() const;
  std::optional<AuditClip> clip(const std::string& clip_id) const;

  // First unjudged clip in plan order not leased to another auditor.
  std::optional<std::string> next_for(const std::string& auditor);

  Remediation record(AuditVerdict v);
  void set_remediation_hook(RemediationHook hook) { hook_ = std::move(hook); }

  AuditSummary summary() const;

 private:
  void validate(const AuditVerdict& v) const;

  AuditPlan plan_;
  std::filesystem::path log_path_;
  std::map<std::string, AuditClip> clips_;
  SegmentConfig segment_config_;
  std::map<std::string, AuditVerdict> verdicts_;
  std::map<std::string, std::string> leases_;
  RemediationHook hook_;
  mutable std::mutex mu_;
};

std::vector<AuditVerdict> read_verdict_log(const std::filesystem::path& path);

// Pooled summary over every verdict in the log (all rounds).
AuditSummary summarize_log(const std::vector<AuditVerdict>& verdicts, std::size_t population, double z = 1.96);

// Spectrogram tile: 80 mel bands, 512-point FFT, hop 128, 0 Hz to Nyquist.
Image clip_spectrogram(const ClipBuffer& clip, int width, int height);

inline constexpr int kGridColumns = 5;
inline constexpr int kGridRows = 5;
inline constexpr int kGridWidth = 3840;
inline constexpr int kGridHeight = 2160;

// One 4K page of up to 25 labelled tiles: ids [25*page, 25*page + 25).
// Cells past the end stay background. Throws MissingClip for an empty page
// or a clip the loader cannot produce.
Image render_grid(const std::vector<std::string>& clip_ids, std::size_t page,
                  const std::function<ClipBuffer(const std::string&)>& loader);

}  // namespace avicurate
