#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "avicurate/audio_io.hpp"
#include "avicurate/dsp.hpp"

namespace avicurate {

inline constexpr int kEmbeddingMels = 128;
inline constexpr int kEmbeddingDim = 2 * kEmbeddingMels;

// [per-bin mean over frames, per-bin population std over frames], unit L2
// norm. Silence has no direction and stays all-zero with indexable = false.
struct AcousticEmbedding {
  Eigen::VectorXd vector = Eigen::VectorXd::Zero(kEmbeddingDim);
  std::int64_t source_catalog_id = 0;
  bool indexable = false;
};

AcousticEmbedding embed(const MelSpectrogram& spec, std::int64_t catalog_id = 0);

// Central `seconds` of a recording (the whole recording when shorter).
ClipBuffer central_window(const ClipBuffer& rec, double seconds = 3.0);

// Mel front end (128 bins, 512-point FFT, hop 128) over the central 3 s.
AcousticEmbedding embed_recording(const ClipBuffer& rec, std::int64_t catalog_id);

struct Neighbor {
  std::size_t index = 0;  // position in the indexed collection
  double distance = 0.0;
};

// Exhaustive L2 search over the indexable embeddings. Ties are broken by
// catalog id, so results do not depend on insertion order.
class ExactKnnIndex {
 public:
  explicit ExactKnnIndex(const std::vector<AcousticEmbedding>& embeddings);

  // The k nearest other embeddings to embeddings[i], nearest first. Empty
  // for non-indexable entries.
  std::vector<Neighbor> query(std::size_t i, int k) const;

  std::size_t size() const { return ids_.size(); }

 private:
  Eigen::MatrixXd data_;                 // dim × n
  std::vector<std::int64_t> ids_;        // catalog id per column
  std::vector<std::size_t> positions_;   // column -> input position
  std::vector<std::ptrdiff_t> columns_;  // input position -> column, -1 if absent
};

enum class DuplicateKind { Exact, Near };

struct DuplicatePair {
  std::int64_t keep_id = 0;
  std::int64_t drop_id = 0;
  double distance = 0.0;
  DuplicateKind kind = DuplicateKind::Exact;

  friend bool operator==(const DuplicatePair&, const DuplicatePair&) = default;
};

struct DedupThresholds {
  double exact = 1e-7;  // triggers removal
  double near = 1e-3;   // advisory only
};

struct DuplicateReport {
  std::vector<DuplicatePair> exact;  // sorted by (keep_id, drop_id)
  std::vector<DuplicatePair> near;   // sorted by (keep_id, drop_id)
};

// A pair is found when either member lists the other among its k nearest
// neighbours; each unordered pair is reported once, lower catalog id kept.
DuplicateReport find_duplicates(const std::vector<AcousticEmbedding>& embeddings, int k = 6,
                                const DedupThresholds& thresholds = {});

// Ids to remove after collapsing duplicate chains to their lowest catalog id.
std::set<std::int64_t> resolve_removals(const std::vector<DuplicatePair>& pairs);

// Drops every non-representative member of each duplicate chain. Ids that are
// already gone are tolerated as long as the chain's survivor is present, so
// reapplying the same pairs is a no-op; otherwise UnknownId.
std::vector<RecordingMeta> apply_removals(const std::vector<RecordingMeta>& corpus,
                                          const std::vector<DuplicatePair>& pairs);

void write_duplicate_report(const std::filesystem::path& path, const DuplicateReport& report);

}  // namespace avicurate
