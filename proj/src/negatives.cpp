#include "avicurate/negatives.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <set>

#include "avicurate/balance.hpp"
#include "avicurate/csv.hpp"
#include "avicurate/error.hpp"
#include "avicurate/rng.hpp"

namespace avicurate {

namespace fs = std::filesystem;

namespace {

constexpr std::pair<NegativeSource, std::string_view> kSourceNames[] = {
    {NegativeSource::BirdVox, "birdvox"}, {NegativeSource::Freefield1010, "freefield1010"},
    {NegativeSource::Warblr, "warblr"},   {NegativeSource::Fsc22, "fsc22"},
    {NegativeSource::Esc50, "esc50"},     {NegativeSource::DataSec, "datasec"},
};

constexpr std::pair<SegmentPolicy, std::string_view> kPolicyNames[] = {
    {SegmentPolicy::CenterCrop, "center_crop"},
    {SegmentPolicy::HighestRmsWindow, "highest_rms_window"},
    {SegmentPolicy::PadOrCrop, "pad_or_crop"},
};

// "Chicken coop", "chicken_coop" and "ChickenCoop" are the same class.
std::string fold(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool is_audio(const fs::path& p) {
  static const std::set<std::string> exts{".wav", ".flac", ".mp3", ".ogg", ".aif", ".aiff"};
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return exts.count(e) > 0;
}

std::string relative_name(const fs::path& file, const fs::path& root) {
  return fs::relative(file, root).generic_string();
}

struct Sink {
  const NegativeSourceSpec& spec;
  std::set<std::string> excluded;
  LoadStats stats;
  std::vector<NegativeCandidate> out;

  explicit Sink(const NegativeSourceSpec& s) : spec(s) {
    for (const auto& c : s.excluded_classes) excluded.insert(fold(c));
  }

  void offer(const fs::path& audio, const std::string& label) {
    ++stats.listed;
    if (excluded.count(fold(label))) {
      ++stats.excluded;
      return;
    }
    std::error_code ec;
    if (!fs::is_regular_file(audio, ec)) {
      ++stats.missing_audio;
      return;
    }
    double dur = 0.0;
    try {
      dur = probe_duration(audio);
    } catch (const Error&) {
      ++stats.missing_audio;
      return;
    }
    out.push_back({spec.name, relative_name(audio, spec.root), label, dur, audio});
  }
};

std::vector<fs::path> csv_files_in(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void load_dcase(Sink& sink) {
  const fs::path& root = sink.spec.root;
  bool found = false;
  for (const auto& file : csv_files_in(root)) {
    const csv::Table t = csv::read(file);
    if (t.column("itemid") < 0 || t.column("hasbird") < 0) continue;
    found = true;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (t.at(r, "hasbird") != "0") continue;
      const std::string& id = t.at(r, "itemid");
      fs::path audio = root / "wav" / (id + ".wav");
      if (!fs::exists(audio)) audio = root / (id + ".wav");
      sink.offer(audio, "no_bird");
    }
  }
  if (!found) throw Error(ErrorCode::MissingLabelFile, "no itemid/hasbird CSV in " + root.string());
}

void load_esc50(Sink& sink) {
  const fs::path& root = sink.spec.root;
  const fs::path meta = root / "meta" / "esc50.csv";
  if (!fs::is_regular_file(meta)) throw Error(ErrorCode::MissingLabelFile, "missing " + meta.string());
  const csv::Table t = csv::read(meta);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    sink.offer(root / "audio" / t.at(r, "filename"), t.at(r, "category"));
  }
}

void load_fsc22(Sink& sink) {
  const fs::path& root = sink.spec.root;
  std::vector<fs::path> candidates = csv_files_in(root);
  for (auto& p : csv_files_in(root / "Metadata")) candidates.push_back(p);
  const csv::Table* table = nullptr;
  std::vector<csv::Table> tables;
  for (const auto& file : candidates) {
    tables.push_back(csv::read(file));
    if (tables.back().column("Dataset File Name") >= 0 && tables.back().column("Class Name") >= 0) {
      table = &tables.back();
      break;
    }
  }
  if (!table) throw Error(ErrorCode::MissingLabelFile, "no FSC-22 metadata CSV in " + root.string());

  std::map<std::string, fs::path> by_name;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && is_audio(e.path())) by_name.emplace(e.path().filename().string(), e.path());
  }
  for (std::size_t r = 0; r < table->rows.size(); ++r) {
    const std::string& name = table->at(r, "Dataset File Name");
    const auto it = by_name.find(name);
    sink.offer(it == by_name.end() ? root / name : it->second, table->at(r, "Class Name"));
  }
}

void load_datasec(Sink& sink) {
  const fs::path& root = sink.spec.root;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  if (dirs.empty()) throw Error(ErrorCode::MissingLabelFile, "no category folders in " + root.string());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && is_audio(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) sink.offer(f, dir.filename().string());
  }
}

}  // namespace

std::string_view to_string(NegativeSource s) noexcept {
  for (const auto& [k, v] : kSourceNames) {
    if (k == s) return v;
  }
  return "unknown";
}

std::string_view to_string(SegmentPolicy p) noexcept {
  for (const auto& [k, v] : kPolicyNames) {
    if (k == p) return v;
  }
  return "unknown";
}

NegativeSource parse_negative_source(std::string_view s) {
  for (const auto& [k, v] : kSourceNames) {
    if (v == s) return k;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown negative source '" + std::string(s) + "'");
}

SegmentPolicy parse_segment_policy(std::string_view s) {
  for (const auto& [k, v] : kPolicyNames) {
    if (v == s) return k;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown segmentation policy '" + std::string(s) + "'");
}

std::vector<NegativeSourceSpec> paper_negative_sources(const fs::path& root) {
  std::vector<NegativeSourceSpec> specs(6);
  specs[0] = {NegativeSource::BirdVox, root / "birdvox", {}, 9983, SegmentPolicy::CenterCrop, {}, {}};
  specs[1] = {NegativeSource::Freefield1010, root / "freefield1010", {}, 5755, SegmentPolicy::CenterCrop, {}, {}};
  specs[2] = {NegativeSource::Warblr, root / "warblr", {}, 1950, SegmentPolicy::CenterCrop, {}, {}};
  specs[3] = {NegativeSource::Fsc22,
              root / "fsc22",
              {"BirdChirping", "WingFlapping"},
              1875,
              SegmentPolicy::PadOrCrop,
              {"Rain", "Wind", "Thunderstorm", "WaterDrops", "Insect", "Frog", "Fire", "TreeFalling", "Squirrel",
               "Lion", "Wolfhowl", "Silence"},
              {}};
  specs[4] = {NegativeSource::Esc50,
              root / "esc50",
              {"chirping_birds", "crow", "rooster", "hen"},
              1840,
              SegmentPolicy::PadOrCrop,
              {"rain", "wind", "thunderstorm", "sea_waves", "crackling_fire", "water_drops", "crickets", "insects",
               "frog", "pouring_water"},
              {}};
  specs[5] = {NegativeSource::DataSec,
              root / "datasec",
              {"Birds", "Chicken coop", "Crows seagulls and magpies", "Music"},
              3597,
              SegmentPolicy::HighestRmsWindow,
              {"Thunder", "Insects", "Cats", "Dogs", "Bells", "Aircraft", "Vehicles", "Machinery", "Sirens"},
              {}};
  return specs;
}

std::vector<NegativeCandidate> load_source(const NegativeSourceSpec& spec, LoadStats* stats) {
  std::error_code ec;
  if (!fs::is_directory(spec.root, ec)) {
    throw Error(ErrorCode::UnknownLayout, "not a dataset directory: " + spec.root.string());
  }
  Sink sink(spec);
  switch (spec.name) {
    case NegativeSource::BirdVox:
    case NegativeSource::Freefield1010:
    case NegativeSource::Warblr: load_dcase(sink); break;
    case NegativeSource::Esc50: load_esc50(sink); break;
    case NegativeSource::Fsc22: load_fsc22(sink); break;
    case NegativeSource::DataSec: load_datasec(sink); break;
  }
  std::sort(sink.out.begin(), sink.out.end(),
            [](const auto& a, const auto& b) { return a.source_file < b.source_file; });
  if (stats) *stats = sink.stats;
  return std::move(sink.out);
}

SegmentedNegative segment_negative(const ClipBuffer& clip, SegmentPolicy policy) {
  if (clip.empty()) throw Error(ErrorCode::EmptyBuffer, "empty negative clip");
  const Eigen::Index n = clip.size();
  const Eigen::Index win = kClipSamples;
  SegmentedNegative out;
  if (n <= win) {
    out.clip = zero_pad_to(clip, win);
    return out;
  }
  Eigen::Index start = (n - win) / 2;
  if (policy == SegmentPolicy::HighestRmsWindow) {
    const Eigen::Index step = clip.sample_rate / 10;
    std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = clip.samples[i];
      prefix[i + 1] = prefix[i] + v * v;
    }
    double best = -1.0;
    for (Eigen::Index s = 0; s + win <= n; s += step) {
      const double e = prefix[s + win] - prefix[s];
      if (e > best) {
        best = e;
        start = s;
      }
    }
  }
  out.clip.sample_rate = clip.sample_rate;
  out.clip.samples = clip.samples.segment(start, win);
  out.start_s = static_cast<double>(start) / clip.sample_rate;
  return out;
}

void QualityGate::validate() const {
  if (!(min_rms > 0 && max_peak > 0 && min_dynamic_range > 0)) {
    throw Error(ErrorCode::ConfigInvalid, "quality gate thresholds must be positive");
  }
  if (!(min_rms < max_peak)) throw Error(ErrorCode::ConfigInvalid, "quality gate needs min_rms < max_peak");
}

GateResult quality_filter(const ClipBuffer& clip, const QualityGate& gate) {
  GateResult r;
  r.features = summarize(clip);
  if (r.features.rms < gate.min_rms) {
    r.reason = "low_rms";
  } else if (r.features.peak > gate.max_peak) {
    r.reason = "high_peak";
  } else if (r.features.dynamic_range < gate.min_dynamic_range) {
    r.reason = "low_dynamic_range";
  }
  r.pass = r.reason.empty();
  return r;
}

std::string negative_clip_id(NegativeSource source, std::string_view source_file) {
  std::string stem(source_file);
  const auto dot = stem.find_last_of('.');
  const auto slash = stem.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) stem.resize(dot);
  for (char& c : stem) {
    if (c == '/' || c == ' ' || c == ',') c = '_';
  }
  return std::string(to_string(source)) + "_" + stem;
}

std::optional<NegativeClip> curate_candidate(const NegativeCandidate& candidate, SegmentPolicy policy,
                                             const QualityGate& gate, ClipBuffer* clip_out) {
  const ClipBuffer full = decode_and_resample(candidate.audio_path);
  if (full.empty()) throw Error(ErrorCode::ZeroLengthAudio, "empty audio: " + candidate.audio_path.string());
  SegmentedNegative seg = segment_negative(full, policy);
  const GateResult g = quality_filter(seg.clip, gate);
  if (!g.pass) return std::nullopt;
  NegativeClip c;
  c.clip_id = negative_clip_id(candidate.source, candidate.source_file);
  c.source = candidate.source;
  c.source_file = candidate.source_file;
  c.class_label = candidate.class_label;
  c.policy = policy;
  c.start_s = seg.start_s;
  c.rms = g.features.rms;
  c.peak = g.features.peak;
  c.dynamic_range = g.features.dynamic_range;
  c.salience = salience(g.features, seg.clip.sample_rate);
  if (clip_out) *clip_out = std::move(seg.clip);
  return c;
}

std::size_t default_category_cap(const std::vector<std::size_t>& supply, std::size_t quota) {
  if (quota == 0) return 0;
  const std::size_t total = std::accumulate(supply.begin(), supply.end(), std::size_t{0});
  if (supply.empty() || total < quota) {
    throw Error(ErrorCode::InsufficientSupply,
                "supply " + std::to_string(total) + " below quota " + std::to_string(quota));
  }
  const std::size_t even = (quota + supply.size() - 1) / supply.size();
  auto filled = [&](std::size_t cap) {
    std::size_t s = 0;
    for (auto v : supply) s += std::min(v, cap);
    return s;
  };
  std::size_t lo = even, hi = std::max(even, *std::max_element(supply.begin(), supply.end()));
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (filled(mid) >= quota) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

std::vector<NegativeClip> allocate_and_diversify(const std::vector<NegativeClip>& candidates,
                                                 const std::vector<NegativeSourceSpec>& specs, std::uint64_t seed,
                                                 std::vector<SourceAllocation>* plan) {
  std::vector<NegativeClip> out;
  if (plan) plan->clear();
  for (const auto& spec : specs) {
    std::set<std::string> excluded;
    for (const auto& c : spec.excluded_classes) excluded.insert(fold(c));

    std::map<std::string, std::vector<const NegativeClip*>> by_category;
    for (const auto& c : candidates) {
      if (c.source == spec.name && !excluded.count(fold(c.class_label))) by_category[c.class_label].push_back(&c);
    }

    std::vector<std::string> order;
    for (const auto& p : spec.category_priority) {
      if (by_category.count(p) && std::find(order.begin(), order.end(), p) == order.end()) order.push_back(p);
    }
    for (const auto& [cat, _] : by_category) {
      if (std::find(order.begin(), order.end(), cat) == order.end()) order.push_back(cat);
    }

    std::vector<std::size_t> supply;
    for (const auto& cat : order) supply.push_back(by_category[cat].size());
    SourceAllocation alloc;
    alloc.source = spec.name;
    const std::string where = std::string(to_string(spec.name));
    if (spec.quota > 0) {
      alloc.cap = spec.category_cap ? *spec.category_cap : default_category_cap(supply, spec.quota);
    }
    std::vector<std::size_t> take(order.size(), 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < order.size(); ++i) total += take[i] = std::min(supply[i], alloc.cap);
    if (total < spec.quota) {
      throw Error(ErrorCode::InsufficientSupply, where + ": " + std::to_string(total) + " clips under cap " +
                                                     std::to_string(alloc.cap) + ", quota " +
                                                     std::to_string(spec.quota));
    }
    // Shave the surplus one clip per category per pass, lowest priority first.
    while (total > spec.quota) {
      for (std::size_t i = order.size(); i-- > 0 && total > spec.quota;) {
        if (take[i] > 0) {
          --take[i];
          --total;
        }
      }
    }

    for (std::size_t i = 0; i < order.size(); ++i) {
      auto members = by_category[order[i]];
      std::sort(members.begin(), members.end(), [](auto a, auto b) { return a->clip_id < b->clip_id; });
      Rng rng = make_rng(seed, where + "/" + order[i]);
      for (auto j : sample_without_replacement(members.size(), take[i], rng)) out.push_back(*members[j]);
      alloc.categories.push_back({order[i], supply[i], take[i]});
    }
    if (plan) plan->push_back(std::move(alloc));
  }

  std::map<NegativeSource, std::size_t> rank;
  for (std::size_t i = 0; i < specs.size(); ++i) rank.emplace(specs[i].name, i);
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    if (a.source != b.source) return rank[a.source] < rank[b.source];
    return a.clip_id < b.clip_id;
  });
  return out;
}

namespace {
const std::vector<std::string> kManifestHeader{"clip_id", "source_dataset", "source_file", "class_label", "policy",
                                               "start_s", "rms",            "peak",        "dynamic_range",
                                               "salience"};
}

void write_negative_manifest(const fs::path& path, const std::vector<NegativeClip>& clips) {
  csv::Table t;
  t.header = kManifestHeader;
  for (const auto& c : clips) {
    t.rows.push_back({c.clip_id, std::string(to_string(c.source)), c.source_file, c.class_label,
                      std::string(to_string(c.policy)), csv::fmt_double(c.start_s, 10), csv::fmt_double(c.rms, 10),
                      csv::fmt_double(c.peak, 10), csv::fmt_double(c.dynamic_range, 10),
                      csv::fmt_double(c.salience, 10)});
  }
  csv::write(path, t);
}

std::vector<NegativeClip> read_negative_manifest(const fs::path& path) {
  const csv::Table t = csv::read(path);
  std::vector<NegativeClip> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    NegativeClip c;
    c.clip_id = t.at(r, "clip_id");
    c.source = parse_negative_source(t.at(r, "source_dataset"));
    c.source_file = t.at(r, "source_file");
    c.class_label = t.at(r, "class_label");
    c.policy = parse_segment_policy(t.at(r, "policy"));
    c.start_s = std::stod(t.at(r, "start_s"));
    c.rms = std::stod(t.at(r, "rms"));
    c.peak = std::stod(t.at(r, "peak"));
    c.dynamic_range = std::stod(t.at(r, "dynamic_range"));
    c.salience = std::stod(t.at(r, "salience"));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace avicurate
