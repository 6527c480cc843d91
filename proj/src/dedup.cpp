#include "avicurate/dedup.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

#include "avicurate/csv.hpp"
#include "avicurate/error.hpp"

namespace avicurate {

AcousticEmbedding embed(const MelSpectrogram& spec, std::int64_t catalog_id) {
  if (spec.n_mels() != kEmbeddingMels) {
    throw Error(ErrorCode::InvalidArgument, "embedding expects 128 mel bins, got " + std::to_string(spec.n_mels()));
  }
  if (spec.n_frames() < 2) throw Error(ErrorCode::TooFewFrames, "need at least 2 frames");

  AcousticEmbedding e;
  e.source_catalog_id = catalog_id;
  const Eigen::VectorXd mean = spec.frames.rowwise().mean();
  const Eigen::VectorXd stdev =
      ((spec.frames.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(spec.n_frames())).sqrt();
  e.vector << mean, stdev;
  const double norm = e.vector.norm();
  if (norm > 0.0) {
    e.vector /= norm;
    e.indexable = true;
  } else {
    e.vector.setZero();
  }
  return e;
}

ClipBuffer central_window(const ClipBuffer& rec, double seconds) {
  const auto want = static_cast<Eigen::Index>(std::lround(seconds * rec.sample_rate));
  if (rec.size() <= want) return rec;
  ClipBuffer out;
  out.sample_rate = rec.sample_rate;
  out.samples = rec.samples.segment((rec.size() - want) / 2, want);
  return out;
}

AcousticEmbedding embed_recording(const ClipBuffer& rec, std::int64_t catalog_id) {
  return embed(mel_spectrogram(central_window(rec), kEmbeddingMels, 512, 128), catalog_id);
}

ExactKnnIndex::ExactKnnIndex(const std::vector<AcousticEmbedding>& embeddings)
    : columns_(embeddings.size(), -1) {
  std::size_t n = 0;
  for (const auto& e : embeddings) n += e.indexable ? 1 : 0;
  data_.resize(kEmbeddingDim, static_cast<Eigen::Index>(n));
  std::size_t c = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (!embeddings[i].indexable) continue;
    if (embeddings[i].vector.size() != kEmbeddingDim) throw Error(ErrorCode::InvalidArgument, "embedding dimension");
    data_.col(static_cast<Eigen::Index>(c)) = embeddings[i].vector;
    ids_.push_back(embeddings[i].source_catalog_id);
    positions_.push_back(i);
    columns_[i] = static_cast<std::ptrdiff_t>(c);
    ++c;
  }
}

std::vector<Neighbor> ExactKnnIndex::query(std::size_t i, int k) const {
  if (i >= columns_.size() || columns_[i] < 0 || k <= 0) return {};
  const Eigen::Index self = columns_[i];
  const Eigen::RowVectorXd d2 = (data_.colwise() - data_.col(self)).colwise().squaredNorm();

  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(d2.size()));
  for (Eigen::Index c = 0; c < d2.size(); ++c) {
    if (c != self) order.push_back(c);
  }
  const auto closer = [&](Eigen::Index a, Eigen::Index b) {
    if (d2[a] != d2[b]) return d2[a] < d2[b];
    if (ids_[a] != ids_[b]) return ids_[a] < ids_[b];
    return a < b;
  };
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), closer);

  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t j = 0; j < take; ++j) {
    out.push_back({positions_[static_cast<std::size_t>(order[j])], std::sqrt(d2[order[j]])});
  }
  return out;
}

DuplicateReport find_duplicates(const std::vector<AcousticEmbedding>& embeddings, int k,
                                const DedupThresholds& thresholds) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  DuplicateReport report;
  if (embeddings.empty()) return report;

  const ExactKnnIndex index(embeddings);
  std::map<std::pair<std::int64_t, std::int64_t>, double> found;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (const Neighbor& nb : index.query(i, k)) {
      if (nb.distance >= thresholds.near) continue;
      const std::int64_t a = embeddings[i].source_catalog_id;
      const std::int64_t b = embeddings[nb.index].source_catalog_id;
      if (a == b) continue;
      found.emplace(std::minmax(a, b), nb.distance);
    }
  }
  for (const auto& [ids, distance] : found) {
    const bool exact = distance < thresholds.exact;
    DuplicatePair p{ids.first, ids.second, distance, exact ? DuplicateKind::Exact : DuplicateKind::Near};
    (exact ? report.exact : report.near).push_back(p);
  }
  return report;
}

namespace {

class UnionFind {
 public:
  std::int64_t find(std::int64_t x) {
    auto it = parent_.find(x);
    if (it == parent_.end()) {
      parent_.emplace(x, x);
      return x;
    }
    if (it->second == x) return x;
    const std::int64_t root = find(it->second);
    parent_[x] = root;
    return root;
  }

  // The smaller id always becomes the root, so a root is its set's minimum.
  void unite(std::int64_t a, std::int64_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

  std::vector<std::int64_t> members() const {
    std::vector<std::int64_t> out;
    for (const auto& [id, _] : parent_) out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::unordered_map<std::int64_t, std::int64_t> parent_;
};

}  // namespace

std::set<std::int64_t> resolve_removals(const std::vector<DuplicatePair>& pairs) {
  UnionFind uf;
  for (const auto& p : pairs) uf.unite(p.keep_id, p.drop_id);
  std::set<std::int64_t> drop;
  for (std::int64_t id : uf.members()) {
    if (uf.find(id) != id) drop.insert(id);
  }
  return drop;
}

std::vector<RecordingMeta> apply_removals(const std::vector<RecordingMeta>& corpus,
                                          const std::vector<DuplicatePair>& pairs) {
  std::set<std::int64_t> present;
  for (const auto& r : corpus) present.insert(r.catalog_id);

  UnionFind uf;
  for (const auto& p : pairs) uf.unite(p.keep_id, p.drop_id);
  for (std::int64_t id : uf.members()) {
    if (!present.count(id) && !present.count(uf.find(id))) {
      throw Error(ErrorCode::UnknownId, "catalog id " + std::to_string(id) + " not in corpus");
    }
  }
  const std::set<std::int64_t> drop = resolve_removals(pairs);
  std::vector<RecordingMeta> kept;
  kept.reserve(corpus.size());
  for (const auto& r : corpus) {
    if (!drop.count(r.catalog_id)) kept.push_back(r);
  }
  return kept;
}

void write_duplicate_report(const std::filesystem::path& path, const DuplicateReport& report) {
  csv::Table t;
  t.header = {"keep_id", "drop_id", "distance", "kind"};
  for (const auto* group : {&report.exact, &report.near}) {
    for (const auto& p : *group) {
      t.rows.push_back({std::to_string(p.keep_id), std::to_string(p.drop_id), csv::fmt_double(p.distance, 9),
                        p.kind == DuplicateKind::Exact ? "exact" : "near"});
    }
  }
  csv::write(path, t);
}

}  // namespace avicurate
