#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avicurate/audio_io.hpp"
#include "avicurate/dsp.hpp"

namespace avicurate {

// 0.7 * contrast/40 dB + 0.3 * centroid/f_s. The centroid is divided by the
// full sample rate, not Nyquist, so that term tops out at 0.15.
double salience(double mean_contrast_db, double mean_centroid_hz, double sample_rate);
inline double salience(const FeatureSummary& f, double sample_rate) {
  return salience(f.mean_contrast, f.mean_centroid, sample_rate);
}

struct ScoredClip {
  std::string clip_id;
  std::string species;
  double salience = 0.0;
  double mean_contrast = 0.0;
  double mean_centroid = 0.0;
  Quality quality = Quality::Unrated;
  int cluster_id = -1;
  Eigen::VectorXd embedding;
};

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;  // dim × k
  int iterations = 0;
};

// Lloyd iterations from a k-means++ start. Points are columns. k is capped at
// the number of points; when points coincide, surplus centres duplicate an
// existing one and their clusters stay empty.
KMeansResult kmeans(const Eigen::Ref<const Eigen::MatrixXd>& points, int k, std::uint64_t seed, int max_iterations = 100);

// Clusters one species' clips on their embeddings and writes cluster_id.
// The RNG stream is derived from (seed, species), so the result does not
// depend on which other species are processed or in what order.
void cluster_species(std::span<ScoredClip> clips, int k, std::uint64_t seed, int max_iterations = 100);

std::size_t base_quota(std::size_t n_target, std::size_t n_species);

// min(count, floor(n_target / S)) per species.
std::map<std::string, std::size_t> base_allocate(const std::map<std::string, std::size_t>& counts,
                                                 std::size_t n_target);

// Round-robin over clusters ordered by their best salience; inside a cluster
// by salience, then clip_id. Returns positions into `clips`.
std::vector<std::size_t> select_within_species(std::span<const ScoredClip> clips, std::size_t quota);

struct BackfillBonuses {
  double quality_a = 0.10;
  double quality_b = 0.05;
  double diversity = 0.05;  // first member of a (species, cluster)
};

double quality_bonus(Quality q, const BackfillBonuses& bonuses);

// Max-priority backfill on salience + quality bonus + diversity bonus. The
// diversity bonus is re-evaluated as clips are taken, so a cluster loses it
// once any member is selected. Returns positions into `clips`, in pick order.
std::vector<std::size_t> backfill(std::span<const ScoredClip> clips, const std::vector<bool>& selected,
                                  std::size_t deficit, const BackfillBonuses& bonuses = {});

// Keeps the n_target highest-salience clips (ties by clip_id), but never
// drops a species' last clip while another candidate could go instead.
std::vector<std::size_t> global_trim(std::span<const ScoredClip> clips, std::vector<std::size_t> selected,
                                     std::size_t n_target);

// Gini coefficient over per-species counts. Evaluated in integer arithmetic
// up to the final division, so equal counts give exactly 0.
double gini(std::span<const std::uint64_t> counts);
double gini(const std::map<std::string, std::size_t>& counts);

struct BalanceConfig {
  std::size_t n_target = 25000;
  int k_clusters = 5;
  std::uint64_t seed = 42;
  int max_iterations = 100;
  BackfillBonuses bonuses;
};

struct BalanceReport {
  std::size_t n_species = 0;
  std::size_t n_clips_before = 0;
  std::size_t n_clips_after = 0;
  double gini_before = 0.0;
  double gini_after = 0.0;
  double mean_per_species_before = 0.0;
  double mean_per_species_after = 0.0;
  std::size_t n_base = 0;
  std::size_t n_base_selected = 0;
  std::size_t n_backfilled = 0;
  std::size_t n_trimmed = 0;
  std::size_t unique_clusters = 0;
  std::map<std::string, std::size_t> per_species_counts;
};

struct BalanceResult {
  std::vector<std::size_t> selected;  // positions into the input, sorted by clip_id
  BalanceReport report;
};

// Full run: cluster every species, base allocation, backfill to n_target,
// trim if over. cluster_id is written into `clips`.
BalanceResult balance(std::vector<ScoredClip>& clips, const BalanceConfig& config);

}  // namespace avicurate
