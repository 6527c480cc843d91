#include "avicurate/balance.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

#include "avicurate/error.hpp"
#include "avicurate/rng.hpp"

namespace avicurate {

double salience(double mean_contrast_db, double mean_centroid_hz, double sample_rate) {
  return 0.7 * (mean_contrast_db / 40.0) + 0.3 * (mean_centroid_hz / sample_rate);
}

KMeansResult kmeans(const Eigen::Ref<const Eigen::MatrixXd>& points, int k, std::uint64_t seed, int max_iterations) {
  KMeansResult r;
  const Eigen::Index n = points.cols();
  if (n == 0 || k <= 0) return r;
  const Eigen::Index kk = std::min<Eigen::Index>(k, n);
  Rng rng = make_rng(seed, "kmeans");

  // k-means++ seeding.
  r.centroids.resize(points.rows(), kk);
  r.centroids.col(0) = points.col(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (points.colwise() - r.centroids.col(0)).colwise().squaredNorm().transpose();
  for (Eigen::Index c = 1; c < kk; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = uniform_unit(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] <= 0.0 && pick > 0) --pick;
    }
    r.centroids.col(c) = points.col(pick);
    d2 = d2.cwiseMin((points.colwise() - r.centroids.col(c)).colwise().squaredNorm().transpose());
  }

  auto nearest = [&](Eigen::Index i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < kk; ++c) {
      const double d = (points.col(i) - r.centroids.col(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    return best;
  };

  r.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest(i);
      if (c != r.labels[i]) {
        r.labels[i] = c;
        changed = true;
      }
    }
    r.iterations = it + 1;
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), kk);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(kk);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(r.labels[i]) += points.col(i);
      counts[r.labels[i]] += 1.0;
    }
    for (Eigen::Index c = 0; c < kk; ++c) {
      if (counts[c] > 0) r.centroids.col(c) = sums.col(c) / counts[c];
    }
  }
  return r;
}

void cluster_species(std::span<ScoredClip> clips, int k, std::uint64_t seed, int max_iterations) {
  if (clips.empty()) return;
  // Deterministic point order regardless of how the caller arranged clips.
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return clips[a].clip_id < clips[b].clip_id; });

  const Eigen::Index dim = clips[order[0]].embedding.size();
  Eigen::MatrixXd points(dim, static_cast<Eigen::Index>(clips.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (clips[order[i]].embedding.size() != dim) throw Error(ErrorCode::InvalidArgument, "embedding dimensions differ");
    points.col(static_cast<Eigen::Index>(i)) = clips[order[i]].embedding;
  }
  const std::uint64_t species_seed = fnv1a(clips[order[0]].species, seed);
  const KMeansResult km = kmeans(points, k, species_seed, max_iterations);
  for (std::size_t i = 0; i < order.size(); ++i) clips[order[i]].cluster_id = km.labels[i];
}

std::size_t base_quota(std::size_t n_target, std::size_t n_species) {
  if (n_species == 0) return 0;
  return n_target / n_species;
}

std::map<std::string, std::size_t> base_allocate(const std::map<std::string, std::size_t>& counts,
                                                 std::size_t n_target) {
  const std::size_t n_base = base_quota(n_target, counts.size());
  std::map<std::string, std::size_t> quotas;
  for (const auto& [species, count] : counts) quotas[species] = std::min(count, n_base);
  return quotas;
}

namespace {

bool ranks_before(const ScoredClip& a, const ScoredClip& b) {
  if (a.salience != b.salience) return a.salience > b.salience;
  return a.clip_id < b.clip_id;
}

}  // namespace

std::vector<std::size_t> select_within_species(std::span<const ScoredClip> clips, std::size_t quota) {
  if (quota > clips.size()) {
    throw Error(ErrorCode::QuotaExceedsSupply,
                "quota " + std::to_string(quota) + " > " + std::to_string(clips.size()) + " clips");
  }
  std::map<int, std::vector<std::size_t>> by_cluster;
  for (std::size_t i = 0; i < clips.size(); ++i) by_cluster[clips[i].cluster_id].push_back(i);

  std::vector<std::vector<std::size_t>> queues;
  for (auto& [_, members] : by_cluster) {
    std::sort(members.begin(), members.end(), [&](auto a, auto b) { return ranks_before(clips[a], clips[b]); });
    queues.push_back(std::move(members));
  }
  // by_cluster iterates in cluster-id order, so stable_sort breaks ties by id.
  std::stable_sort(queues.begin(), queues.end(), [&](const auto& a, const auto& b) {
    return clips[a.front()].salience > clips[b.front()].salience;
  });

  std::vector<std::size_t> picked;
  picked.reserve(quota);
  for (std::size_t round = 0; picked.size() < quota; ++round) {
    for (const auto& q : queues) {
      if (picked.size() == quota) break;
      if (round < q.size()) picked.push_back(q[round]);
    }
  }
  return picked;
}

double quality_bonus(Quality q, const BackfillBonuses& bonuses) {
  switch (q) {
    case Quality::A: return bonuses.quality_a;
    case Quality::B: return bonuses.quality_b;
    default: return 0.0;
  }
}

std::vector<std::size_t> backfill(std::span<const ScoredClip> clips, const std::vector<bool>& selected,
                                  std::size_t deficit, const BackfillBonuses& bonuses) {
  if (selected.size() != clips.size()) throw Error(ErrorCode::InvalidArgument, "selection mask size");
  std::set<std::pair<std::string, int>> used;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (selected[i]) used.emplace(clips[i].species, clips[i].cluster_id);
  }

  struct Entry {
    double score;
    std::size_t index;
    bool diversity;
  };
  const auto worse = [&](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score < b.score;
    return clips[a.index].clip_id > clips[b.index].clip_id;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (selected[i]) continue;
    const bool fresh = !used.count({clips[i].species, clips[i].cluster_id});
    heap.push({clips[i].salience + quality_bonus(clips[i].quality, bonuses) + (fresh ? bonuses.diversity : 0.0), i,
               fresh});
  }

  std::vector<std::size_t> added;
  while (added.size() < deficit && !heap.empty()) {
    Entry top = heap.top();
    heap.pop();
    const ScoredClip& c = clips[top.index];
    const std::pair<std::string, int> key{c.species, c.cluster_id};
    if (top.diversity && used.count(key)) {
      top.diversity = false;
      top.score = c.salience + quality_bonus(c.quality, bonuses);
      heap.push(top);
      continue;
    }
    used.insert(key);
    added.push_back(top.index);
  }
  return added;
}

std::vector<std::size_t> global_trim(std::span<const ScoredClip> clips, std::vector<std::size_t> selected,
                                     std::size_t n_target) {
  std::sort(selected.begin(), selected.end(), [&](auto a, auto b) { return ranks_before(clips[a], clips[b]); });
  if (selected.size() <= n_target) return selected;

  std::map<std::string, std::size_t> per_species;
  for (auto i : selected) ++per_species[clips[i].species];

  std::vector<bool> keep(selected.size(), true);
  std::size_t remaining = selected.size();
  for (std::size_t r = selected.size(); r-- > 0 && remaining > n_target;) {
    auto& count = per_species[clips[selected[r]].species];
    if (count <= 1) continue;
    --count;
    keep[r] = false;
    --remaining;
  }
  // Only species singletons are left; the floor cannot hold.
  for (std::size_t r = selected.size(); r-- > 0 && remaining > n_target;) {
    if (!keep[r]) continue;
    keep[r] = false;
    --remaining;
  }
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < selected.size(); ++r) {
    if (keep[r]) out.push_back(selected[r]);
  }
  return out;
}

double gini(std::span<const std::uint64_t> counts) {
  if (counts.empty()) throw Error(ErrorCode::EmptyInput, "gini of no counts");
  std::vector<std::uint64_t> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  const auto s = static_cast<unsigned __int128>(sorted.size());
  unsigned __int128 total = 0, weighted = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    total += sorted[i];
    weighted += static_cast<unsigned __int128>(i + 1) * sorted[i];
  }
  if (total == 0) throw Error(ErrorCode::AllZero, "gini of all-zero counts");
  // 2*sum(i*n_i)/(S*sum n) - (S+1)/S == (2*sum(i*n_i) - (S+1)*sum n) / (S*sum n)
  const auto lhs = 2 * weighted;
  const auto rhs = (s + 1) * total;
  const double num = lhs >= rhs ? static_cast<double>(lhs - rhs) : -static_cast<double>(rhs - lhs);
  return num / static_cast<double>(s * total);
}

double gini(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::uint64_t> v;
  for (const auto& [_, c] : counts) v.push_back(c);
  return gini(v);
}

BalanceResult balance(std::vector<ScoredClip>& clips, const BalanceConfig& config) {
  if (config.n_target == 0) throw Error(ErrorCode::InvalidArgument, "n_target must be >= 1");
  BalanceResult result;
  BalanceReport& rep = result.report;

  std::map<std::string, std::vector<std::size_t>> by_species;
  for (std::size_t i = 0; i < clips.size(); ++i) by_species[clips[i].species].push_back(i);
  if (by_species.empty()) return result;

  std::map<std::string, std::size_t> before;
  for (auto& [species, idx] : by_species) {
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return clips[a].clip_id < clips[b].clip_id; });
    std::vector<ScoredClip> group;
    group.reserve(idx.size());
    for (auto i : idx) group.push_back(std::move(clips[i]));
    cluster_species(group, config.k_clusters, config.seed, config.max_iterations);
    for (std::size_t j = 0; j < idx.size(); ++j) clips[idx[j]] = std::move(group[j]);
    before[species] = idx.size();
  }

  const auto quotas = base_allocate(before, config.n_target);
  rep.n_base = base_quota(config.n_target, before.size());
  std::vector<bool> chosen(clips.size(), false);
  for (const auto& [species, idx] : by_species) {
    std::vector<ScoredClip> view;
    view.reserve(idx.size());
    for (auto i : idx) view.push_back(clips[i]);
    for (auto local : select_within_species(view, quotas.at(species))) chosen[idx[local]] = true;
  }
  rep.n_base_selected = static_cast<std::size_t>(std::count(chosen.begin(), chosen.end(), true));

  if (rep.n_base_selected < config.n_target) {
    const auto added = backfill(clips, chosen, config.n_target - rep.n_base_selected, config.bonuses);
    for (auto i : added) chosen[i] = true;
    rep.n_backfilled = added.size();
  }

  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (chosen[i]) selected.push_back(i);
  }
  if (selected.size() > config.n_target) {
    const std::size_t n = selected.size();
    selected = global_trim(clips, std::move(selected), config.n_target);
    rep.n_trimmed = n - selected.size();
  }
  std::sort(selected.begin(), selected.end(), [&](auto a, auto b) { return clips[a].clip_id < clips[b].clip_id; });

  std::set<std::pair<std::string, int>> clusters;
  for (auto i : selected) {
    ++rep.per_species_counts[clips[i].species];
    clusters.emplace(clips[i].species, clips[i].cluster_id);
  }
  for (const auto& [species, _] : before) rep.per_species_counts.try_emplace(species, 0);

  rep.n_species = before.size();
  rep.n_clips_before = clips.size();
  rep.n_clips_after = selected.size();
  rep.gini_before = gini(before);
  rep.gini_after = selected.empty() ? 0.0 : gini(rep.per_species_counts);
  rep.mean_per_species_before = static_cast<double>(clips.size()) / before.size();
  rep.mean_per_species_after = static_cast<double>(selected.size()) / before.size();
  rep.unique_clusters = clusters.size();
  result.selected = std::move(selected);
  return result;
}

}  // namespace avicurate
