// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Every check compares library output against an oracle written
// here, independently of the code under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avicurate/audit.hpp"
#include "avicurate/balance.hpp"
#include "avicurate/catalog.hpp"
#include "avicurate/csv.hpp"
#include "avicurate/dedup.hpp"
#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"
#include "avicurate/negatives.hpp"
#include "avicurate/pipeline.hpp"
#include "avicurate/rng.hpp"
#include "avicurate/segment.hpp"
#include "fixtures.hpp"
#include "mini_corpus.hpp"
#include "synth.hpp"

using namespace avicurate;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGiniTol = 1e-9;
constexpr double kSalienceTol = 1e-12;
constexpr double kKnnDistanceTol = 1e-12;
constexpr double kSplitTol = 1.0;  // clips per split, per label
constexpr double kAuditCoverage = 0.95;

struct Result {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (failures.size() < 5) failures.push_back(what);
    }
  }
};

using Check = std::function<void(Result&)>;

// ---------------------------------------------------------------------------
// 1. Cochran sample size

void cochran_fixture(Result& o) {
  std::vector<std::string> ids;
  for (int i = 0; i < 25000; ++i) ids.push_back("c" + std::to_string(i));
  const AuditPlan plan = plan_audit(0.04, 0.015, 1.96, ids, 42);
  o.require(plan.n0 == 656, "n0 = " + std::to_string(plan.n0));
  o.require(plan.n_star == 639, "n* = " + std::to_string(plan.n_star));
  o.require(plan.sampled_clip_ids.size() == 639, "sample size");
  o.require(std::set<std::string>(plan.sampled_clip_ids.begin(), plan.sampled_clip_ids.end()).size() == 639,
            "sample has repeats");
  o.detail << "n0=" << plan.n0 << " n*=" << plan.n_star;
}

// ---------------------------------------------------------------------------
// 2. Gini against the mean-absolute-difference definition

double gini_mad(const std::vector<std::uint64_t>& c) {
  long double mad = 0, sum = 0;
  for (auto a : c) {
    sum += a;
    for (auto b : c) mad += std::fabs(static_cast<long double>(a) - static_cast<long double>(b));
  }
  const long double n = c.size();
  return static_cast<double>(mad / (2.0L * n * n * (sum / n)));
}

void gini_oracle(Result& o) {
  Rng rng = make_rng(2024, "acceptance/gini");
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::uint64_t> c(2 + uniform_index(rng, 499));
    // Mix of flat, heavy-tailed and sparse vectors.
    const int shape = trial % 3;
    for (auto& v : c) {
      const double u = uniform_unit(rng);
      v = shape == 0 ? uniform_index(rng, 1000)
          : shape == 1 ? static_cast<std::uint64_t>(std::floor(5000.0 * std::pow(u, 6.0)))
                       : (u < 0.2 ? uniform_index(rng, 50) : 0);
    }
    if (std::all_of(c.begin(), c.end(), [](auto v) { return v == 0; })) c[0] = 1;
    const double d = std::fabs(gini(c) - gini_mad(c));
    worst = std::max(worst, d);
    o.require(d < kGiniTol, "trial " + std::to_string(trial) + " differs by " + std::to_string(d));
  }
  for (std::uint64_t n : {1ull, 7ull, 12345ull}) {
    for (std::size_t len : {2u, 100u, 500u}) {
      o.require(gini(std::vector<std::uint64_t>(len, n)) == 0.0, "equal counts not exactly 0");
    }
  }
  o.detail << "1000 vectors, max |diff| " << worst;
}

// ---------------------------------------------------------------------------
// 3. Balancer on a Zipf corpus

std::string selection_manifest(const std::vector<ScoredClip>& clips, const BalanceResult& r) {
  csv::Table t;
  t.header = {"clip_id", "species", "cluster_id", "salience"};
  for (auto i : r.selected) {
    t.rows.push_back({clips[i].clip_id, clips[i].species, std::to_string(clips[i].cluster_id),
                      csv::fmt_double(clips[i].salience, 17)});
  }
  return csv::format(t);
}

void balancer_zipf(Result& o) {
  const auto corpus = synth::zipf_corpus(100, 5000, 1.2, 1200);
  std::map<std::string, std::uint64_t> before;
  for (const auto& c : corpus) ++before[c.species];
  o.require(corpus.size() == 5000 && before.size() == 100, "corpus shape");

  BalanceConfig cfg;
  cfg.n_target = 2000;
  cfg.seed = 42;
  auto a = corpus, b = corpus;
  const BalanceResult ra = balance(a, cfg);
  const BalanceResult rb = balance(b, cfg);

  std::map<std::string, std::uint64_t> after;
  for (auto i : ra.selected) ++after[a[i].species];
  std::vector<std::uint64_t> vb, va;
  for (const auto& [_, n] : before) vb.push_back(n);
  for (const auto& [_, n] : after) va.push_back(n);
  const double g0 = gini_mad(vb), g1 = gini_mad(va);

  o.require(ra.selected.size() == 2000, "selected " + std::to_string(ra.selected.size()));
  o.require(std::set<std::size_t>(ra.selected.begin(), ra.selected.end()).size() == ra.selected.size(),
            "clip selected twice");
  o.require(after.size() == 100, "species present " + std::to_string(after.size()));
  o.require(g1 < g0, "gini did not fall");
  const std::string ma = selection_manifest(a, ra), mb = selection_manifest(b, rb);
  o.require(ma == mb, "same-seed manifests differ");
  o.detail << "2000 clips, 100 species, gini " << g0 << " -> " << g1 << ", manifests " << (ma == mb ? "identical" : "DIFFER");
}

// ---------------------------------------------------------------------------
// 4. Duplicate detection with planted re-uploads

ClipBuffer random_recording(Rng& rng, std::uint64_t seed) {
  const double dur = 4.0 + 4.0 * uniform_unit(rng);
  ClipBuffer rec = synth::pink_noise(dur, 0.002 + 0.02 * uniform_unit(rng), seed);
  const int tones = 1 + static_cast<int>(uniform_index(rng, 4));
  for (int t = 0; t < tones; ++t) {
    synth::add_burst(rec, dur * uniform_unit(rng) * 0.8, 0.3 + 2.0 * uniform_unit(rng),
                     800.0 + 6000.0 * uniform_unit(rng), 0.05 + 0.4 * uniform_unit(rng));
  }
  return rec;
}

// Ranking by explicit loops, ties broken by catalog id then position.
std::vector<std::size_t> brute_neighbors(const std::vector<AcousticEmbedding>& es, std::size_t i, int k,
                                         std::vector<double>* dist) {
  std::vector<std::tuple<double, std::int64_t, std::size_t>> all;
  for (std::size_t j = 0; j < es.size(); ++j) {
    if (j == i || !es[j].indexable) continue;
    double d2 = 0;
    for (Eigen::Index t = 0; t < kEmbeddingDim; ++t) {
      const double x = es[i].vector[t] - es[j].vector[t];
      d2 += x * x;
    }
    all.emplace_back(d2, es[j].source_catalog_id, j);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < all.size() && n < static_cast<std::size_t>(k); ++n) {
    out.push_back(std::get<2>(all[n]));
    if (dist) dist->push_back(std::sqrt(std::get<0>(all[n])));
  }
  return out;
}

bool knn_matches(const std::vector<AcousticEmbedding>& es, int k, std::string* why) {
  const ExactKnnIndex index(es);
  for (std::size_t i = 0; i < es.size(); ++i) {
    if (!es[i].indexable) continue;
    std::vector<double> dist;
    const auto want = brute_neighbors(es, i, k, &dist);
    const auto got = index.query(i, k);
    if (got.size() != want.size()) {
      *why = "neighbour count at " + std::to_string(i);
      return false;
    }
    for (std::size_t n = 0; n < got.size(); ++n) {
      if (got[n].index != want[n] || std::fabs(got[n].distance - dist[n]) > kKnnDistanceTol) {
        *why = "neighbour " + std::to_string(n) + " of item " + std::to_string(i);
        return false;
      }
    }
  }
  return true;
}

AcousticEmbedding random_unit_embedding(Rng& rng, std::int64_t id) {
  AcousticEmbedding e;
  for (Eigen::Index t = 0; t < kEmbeddingDim; ++t) e.vector[t] = uniform_unit(rng) - 0.5;
  e.vector.normalize();
  e.indexable = true;
  e.source_catalog_id = id;
  return e;
}

void dedup_injection(Result& o) {
  Rng rng = make_rng(31, "acceptance/dedup");
  const int n_original = 500 - 8 - 5;
  std::vector<ClipBuffer> audio;
  std::vector<std::int64_t> ids;
  for (int i = 0; i < n_original; ++i) {
    audio.push_back(random_recording(rng, 9000 + i));
    ids.push_back(100000 + 10 * i);
  }
  // Re-uploads get later (higher) catalog numbers than their originals.
  std::set<std::int64_t> exact_copies, originals(ids.begin(), ids.end());
  std::int64_t next = 900000;
  for (int i = 0; i < 8; ++i) {
    audio.push_back(audio[static_cast<std::size_t>(i * 53)]);
    ids.push_back(next);
    exact_copies.insert(next++);
  }
  // Near duplicates: the same audio under a faint independent noise floor.
  std::vector<std::pair<std::int64_t, std::int64_t>> near_planted;
  for (int i = 0; i < 5; ++i) {
    const std::size_t src = static_cast<std::size_t>(7 + i * 61);
    ClipBuffer copy = audio[src];
    synth::add(copy, synth::white_noise(copy.duration_s(), 1.0, 700 + i), 2e-5);
    audio.push_back(copy);
    near_planted.push_back({ids[src], next});
    ids.push_back(next++);
  }

  std::vector<AcousticEmbedding> es;
  for (std::size_t i = 0; i < audio.size(); ++i) es.push_back(embed_recording(audio[i], ids[i]));
  // Interleave so planted pairs are not adjacent in input order.
  Rng perm = make_rng(31, "acceptance/dedup-order");
  shuffle(es, perm);

  const DuplicateReport r = find_duplicates(es);
  const auto removed = resolve_removals(r.exact);
  o.require(r.exact.size() == 8, "exact pairs " + std::to_string(r.exact.size()));
  o.require(removed == exact_copies, "removed ids are not the planted copies");
  o.require(r.near.size() == 5, "near pairs " + std::to_string(r.near.size()));
  std::set<std::pair<std::int64_t, std::int64_t>> near_found;
  double near_max = 0;
  for (const auto& p : r.near) {
    near_found.insert({p.keep_id, p.drop_id});
    near_max = std::max(near_max, p.distance);
    o.require(p.distance < 1e-3, "near pair distance " + std::to_string(p.distance));
  }
  o.require(near_found == std::set(near_planted.begin(), near_planted.end()), "near pairs are not the planted ones");
  for (const auto& p : r.exact) o.require(p.keep_id < p.drop_id, "kept the higher catalog number");

  std::vector<RecordingMeta> corpus;
  for (auto id : ids) {
    RecordingMeta m;
    m.catalog_id = id;
    corpus.push_back(m);
  }
  std::set<std::int64_t> kept;
  for (const auto& m : apply_removals(corpus, r.exact)) kept.insert(m.catalog_id);
  std::set<std::int64_t> expect_kept(ids.begin(), ids.end());
  for (auto id : exact_copies) expect_kept.erase(id);
  o.require(kept == expect_kept, "retained set");

  // k-NN against the exhaustive ranking on this corpus and on random ones
  // up to 2,000 items.
  std::string why;
  o.require(knn_matches(es, 6, &why), "500-recording corpus: " + why);
  std::size_t checked = es.size();
  for (std::size_t n : {2u, 3u, 7u, 64u, 500u, 2000u}) {
    std::vector<AcousticEmbedding> rnd;
    Rng g = make_rng(n, "acceptance/knn");
    for (std::size_t i = 0; i < n; ++i) rnd.push_back(random_unit_embedding(g, static_cast<std::int64_t>(5 * i + 1)));
    // Exact ties and a silent member.
    if (n >= 64) {
      for (int t = 0; t < 4; ++t) {
        rnd.push_back(rnd[static_cast<std::size_t>(t)]);
        rnd.back().source_catalog_id = 100000 + t;
      }
      rnd.push_back(AcousticEmbedding{});
    }
    o.require(knn_matches(rnd, 6, &why), std::to_string(n) + "-item corpus: " + why);
    checked += rnd.size();
  }
  o.detail << "8 removals, 5 near pairs (max d " << near_max << "), k-NN = brute force on " << checked << " queries";
}

// ---------------------------------------------------------------------------
// 5. Clip selection against a brute-force greedy

std::vector<Eigen::Index> brute_starts(const ClipBuffer& rec) {
  const Eigen::Index win = 3 * 16000, step = 1600, sep = 24000;
  const Eigen::Index first = rec.size() > 12 * 16000 ? 3 * 16000 : 0;
  std::vector<std::pair<Eigen::Index, double>> windows;
  for (Eigen::Index s = first; s + win <= rec.size(); s += step) {
    double e = 0;
    for (Eigen::Index i = s; i < s + win; ++i) e += static_cast<double>(rec.samples[i]) * rec.samples[i];
    windows.push_back({s, std::sqrt(e / static_cast<double>(win))});
  }
  std::vector<Eigen::Index> chosen;
  std::vector<bool> used(windows.size(), false);
  for (;;) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      if (used[i] || windows[i].second < 0.001) continue;
      bool ok = true;
      for (Eigen::Index c : chosen) ok = ok && std::llabs(c - windows[i].first) >= sep;
      if (ok && (best < 0 || windows[i].second > windows[static_cast<std::size_t>(best)].second)) {
        best = static_cast<std::ptrdiff_t>(i);
      }
    }
    if (best < 0) break;
    used[static_cast<std::size_t>(best)] = true;
    chosen.push_back(windows[static_cast<std::size_t>(best)].first);
  }
  return chosen;
}

void segmenter_oracle(Result& o) {
  Rng rng = make_rng(5150, "acceptance/segment");
  std::size_t clips = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double dur = 3.0 + 57.0 * uniform_unit(rng);
    // Background ranges from below to above the RMS floor.
    ClipBuffer rec = synth::white_noise(dur, 0.003 * uniform_unit(rng), 40000 + trial);
    const int bursts = static_cast<int>(uniform_index(rng, 10));
    for (int b = 0; b < bursts; ++b) {
      synth::add_burst(rec, dur * uniform_unit(rng), 0.1 + 1.5 * uniform_unit(rng),
                       500.0 + 6000.0 * uniform_unit(rng), 0.01 + 0.5 * uniform_unit(rng));
    }
    const auto sel = select_clips(scan_windows(rec));
    std::vector<Eigen::Index> got;
    for (const auto& c : sel) got.push_back(c.start_sample);
    o.require(got == brute_starts(rec), "recording " + std::to_string(trial) + " differs from brute force");
    for (std::size_t i = 0; i < sel.size(); ++i) {
      const double r = rms(rec.samples.segment(sel[i].start_sample, 48000));
      o.require(r >= 0.001, "selection below the RMS floor");
      for (std::size_t j = i + 1; j < sel.size(); ++j) {
        o.require(std::fabs(sel[i].start_s - sel[j].start_s) >= 1.5 - 1e-9, "starts closer than 1.5 s");
      }
    }
    clips += sel.size();
  }
  // A loud 15 s recording: nothing may start in its first 3 s.
  ClipBuffer loud = synth::white_noise(15.0, 0.3, 15);
  synth::add_burst(loud, 0.5, 2.0, 3000.0, 0.9);
  const auto sel = select_clips(scan_windows(loud));
  o.require(!sel.empty(), "15 s recording yielded nothing");
  for (const auto& c : sel) o.require(c.start_s >= 3.0, "15 s recording has a start before 3.0 s");
  o.detail << "200 recordings, " << clips << " clips, 15 s case earliest start "
           << (sel.empty() ? -1.0 : std::min_element(sel.begin(), sel.end(), [](auto& a, auto& b) {
                                       return a.start_s < b.start_s;
                                     })->start_s)
           << " s";
}

// ---------------------------------------------------------------------------
// 6. Salience

void salience_closed_form(Result& o) {
  const double s = salience(20.0, 4000.0, 16000.0);
  o.require(std::fabs(s - 0.425) < kSalienceTol, "salience(20 dB, 4 kHz) = " + std::to_string(s));
  const ClipBuffer quiet = synth::silence(3.0);
  const double s0 = salience(summarize(quiet), quiet.sample_rate);
  o.require(s0 == 0.0, "silence scores " + std::to_string(s0));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15f", s);
  o.detail << "salience " << buf << ", silence " << s0;
}

// ---------------------------------------------------------------------------
// 7. Negative gate and source adapters

void negative_gate(Result& o) {
  const QualityGate gate;
  ClipBuffer clipped = synth::white_noise(3.0, 3.0, 71);
  clipped.samples = clipped.samples.max(-1.0f).min(1.0f);
  ClipBuffer drone = synth::sine(60.0, 3.0, 0.04);
  synth::add(drone, synth::sine(120.0, 3.0, 0.02));
  const struct {
    const char* name;
    ClipBuffer clip;
    bool pass;
  } cases[] = {{"digital silence", synth::silence(3.0), false},
               {"hard-clipped noise", clipped, false},
               {"low-dynamic-range drone", drone, false},
               {"pink noise", synth::pink_noise(3.0, 0.05, 72), true}};
  for (const auto& c : cases) {
    const GateResult r = quality_filter(c.clip, gate);
    o.require(r.pass == c.pass, std::string(c.name) + (r.pass ? " accepted" : " rejected (" + r.reason + ")"));
  }

  // Layouts that include the excluded classes and bird-present rows.
  synth::TempDir dir("acceptance-neg");
  auto specs = paper_negative_sources(dir.path());
  const fixtures::AudioStyle tiny{0.05, 8000, 0.05};
  fixtures::write_mock_dcase(specs[0].root, "BirdVoxDCASE20k.csv", 40, 25, tiny, 1);
  fixtures::write_mock_dcase(specs[1].root, "ff1010bird_metadata.csv", 30, 20, tiny, 2);
  fixtures::write_mock_dcase(specs[2].root, "warblrb10k_public_metadata.csv", 20, 30, tiny, 3);
  fixtures::write_mock_fsc22(specs[3].root, 75, tiny, 4);
  fixtures::write_mock_esc50(specs[4].root, 40, tiny, 5);
  fixtures::write_mock_datasec(specs[5].root, {{"Birds", 3}, {"Chicken_coop", 3}, {"Music", 4}, {"Rain", 5}, {"Dogs", 2}},
                               8000, 6);

  const std::map<std::string, std::set<std::string>> banned{
      {"fsc22", {"BirdChirping", "WingFlapping"}},
      {"esc50", {"chirping_birds", "crow", "rooster", "hen"}},
      {"datasec", {"Birds", "Chicken_coop", "Music"}}};
  std::map<std::string, std::size_t> counts;
  for (const auto& spec : specs) {
    const std::string name(to_string(spec.name));
    const auto cands = load_source(spec);
    counts[name] = cands.size();
    for (const auto& c : cands) {
      if (banned.count(name)) o.require(!banned.at(name).count(c.class_label), name + " yielded " + c.class_label);
      if (spec.name == NegativeSource::BirdVox || spec.name == NegativeSource::Freefield1010 ||
          spec.name == NegativeSource::Warblr) {
        o.require(c.class_label == "no_bird", name + " yielded a bird-present row");
      }
    }
  }
  o.require(counts["birdvox"] == 40 && counts["freefield1010"] == 30 && counts["warblr"] == 20, "DCASE counts");
  o.require(counts["fsc22"] == 1875, "FSC-22 candidates " + std::to_string(counts["fsc22"]));
  o.require(counts["esc50"] == 1840, "ESC-50 candidates " + std::to_string(counts["esc50"]));
  o.require(counts["datasec"] == 7, "DataSEC candidates " + std::to_string(counts["datasec"]));
  o.detail << "gate 4/4; candidates esc50=" << counts["esc50"] << " fsc22=" << counts["fsc22"]
           << " datasec=" << counts["datasec"] << ", no excluded labels";
}

// ---------------------------------------------------------------------------
// 8. Mini end-to-end build

struct WavInfo {
  int channels = 0, rate = 0, bits = 0;
  std::uint32_t data_bytes = 0;
  bool ok = false;
};

// Straight RIFF walk.
WavInfo wav_info(const fs::path& p) {
  WavInfo w;
  std::ifstream in(p, std::ios::binary);
  std::string b((std::istreambuf_iterator<char>(in)), {});
  auto u16 = [&](std::size_t o) { return static_cast<unsigned>(static_cast<unsigned char>(b[o])) |
                                         static_cast<unsigned>(static_cast<unsigned char>(b[o + 1])) << 8; };
  auto u32 = [&](std::size_t o) { return u16(o) | u16(o + 2) << 16; };
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0) return w;
  bool fmt = false, data = false;
  for (std::size_t o = 12; o + 8 <= b.size();) {
    const std::string id = b.substr(o, 4);
    const std::uint32_t len = u32(o + 4);
    if (id == "fmt ") {
      fmt = u16(o + 8) == 1;  // PCM
      w.channels = static_cast<int>(u16(o + 10));
      w.rate = static_cast<int>(u32(o + 12));
      w.bits = static_cast<int>(u16(o + 22));
    } else if (id == "data") {
      data = o + 8 + len <= b.size();
      w.data_bytes = len;
    }
    o += 8 + len + (len & 1);
  }
  w.ok = fmt && data;
  return w;
}

void mini_build(Result& o) {
  synth::TempDir dir("acceptance-mini");
  const auto corpus = fixtures::write_mini_corpus(dir / "fixture", "file://" + (dir / "fixture/audio").string());
  fixtures::write_mini_pages(dir / "fixture/pages", corpus);
  const RunConfig cfg =
      fixtures::mini_config(corpus, "file://" + (dir / "fixture/pages").string(), dir / "fixture/negatives");
  Workspace ws(dir / "ws", cfg);
  for (const auto& r : ws.run_all()) o.require(r.status == "completed", r.stage + " " + r.status);

  const auto clips = read_manifest(ws.dataset_manifest());
  std::map<int, std::map<std::string, std::size_t>> per;
  std::map<std::string, std::set<std::string>> group_splits;
  std::size_t pos = 0, neg = 0, bad_wav = 0;
  for (const auto& c : clips) {
    (c.label == 1 ? pos : neg)++;
    ++per[c.label][c.split];
    // The group key is rebuilt here: catalog id for positives, source file
    // for negatives.
    const std::string group = c.label == 1 ? "xc:" + std::to_string(c.catalog_id) : c.source + ":" + c.source_file;
    group_splits[group].insert(c.split);
    const WavInfo w = wav_info(dir / "ws/dataset" / c.path);
    if (!(w.ok && w.channels == 1 && w.rate == 16000 && w.bits == 16 && w.data_bytes == 48000 * 2)) ++bad_wav;
  }
  o.require(pos == neg, "positives " + std::to_string(pos) + " vs negatives " + std::to_string(neg));
  o.require(pos == fixtures::kMiniTarget, "positives " + std::to_string(pos));
  std::ostringstream split_text;
  for (const auto& [label, s] : per) {
    const double n = static_cast<double>(label == 1 ? pos : neg);
    split_text << (label == 1 ? " pos " : " neg ");
    for (const auto& [name, ratio] : {std::pair<std::string, double>{"train", 0.8}, {"val", 0.1}, {"test", 0.1}}) {
      const double got = s.count(name) ? static_cast<double>(s.at(name)) : 0.0;
      o.require(std::fabs(got - ratio * n) <= kSplitTol,
                "label " + std::to_string(label) + " " + name + " has " + std::to_string(static_cast<int>(got)));
      split_text << static_cast<int>(got) << (name == "test" ? "" : "/");
    }
  }
  std::size_t straddling = 0;
  for (const auto& [_, s] : group_splits) straddling += s.size() > 1;
  o.require(straddling == 0, std::to_string(straddling) + " recordings span several splits");
  o.require(bad_wav == 0, std::to_string(bad_wav) + " clips are not 48000 samples of 16 kHz 16-bit mono");

  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "ws/dataset/audio")) files += e.is_regular_file();
  o.require(files == clips.size(), "audio files " + std::to_string(files) + " vs manifest rows " +
                                       std::to_string(clips.size()));
  o.detail << pos << " positives = " << neg << " negatives, splits" << split_text.str() << ", " << group_splits.size()
           << " groups unsplit, " << clips.size() - bad_wav << "/" << clips.size() << " WAVs conform";
}

// ---------------------------------------------------------------------------
// 9. Audit sampling coverage

double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

void audit_monte_carlo(Result& o) {
  constexpr std::size_t kPopulation = 25000;
  constexpr double kRate = 0.05, kMargin = 0.015, kZ = 1.96;
  const std::size_t n_bad = static_cast<std::size_t>(kRate * kPopulation);

  std::vector<std::string> ids;
  for (std::size_t i = 0; i < kPopulation; ++i) {
    char b[16];
    std::snprintf(b, sizeof b, "clip%05zu", i);
    ids.push_back(b);
  }
  Rng plant = make_rng(42, "acceptance/audit-plant");
  std::set<std::string> bad;
  for (auto i : sample_without_replacement(kPopulation, n_bad, plant)) bad.insert(ids[i]);

  const CochranSize size = cochran(kRate, kMargin, kZ, kPopulation);
  const std::size_t n = size.n_star;
  std::size_t covered = 0;
  for (std::uint64_t round = 0; round < 1000; ++round) {
    const AuditPlan plan = plan_audit(kRate, kMargin, kZ, ids, 42 + round);
    std::size_t errors = 0;
    for (const auto& id : plan.sampled_clip_ids) errors += bad.count(id);
    const AuditSummary s = summarize_counts(n - errors, n, kPopulation, kZ);
    covered += std::fabs(s.error_rate - kRate) <= kMargin;
  }

  // Exact probability of landing inside the margin: hypergeometric sum.
  double exact = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    if (std::fabs(static_cast<double>(k) / static_cast<double>(n) - kRate) > kMargin) continue;
    exact += std::exp(log_choose(static_cast<double>(n_bad), static_cast<double>(k)) +
                      log_choose(static_cast<double>(kPopulation - n_bad), static_cast<double>(n - k)) -
                      log_choose(static_cast<double>(kPopulation), static_cast<double>(n)));
  }
  const double rate = static_cast<double>(covered) / 1000.0;
  o.require(rate >= kAuditCoverage, "coverage " + std::to_string(rate));
  o.detail << "n*=" << n << ", inside margin in " << covered << "/1000 rounds (exact probability " << exact << ")";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Check>> checks{
      {"cochran sample size for 25,000 clips", cochran_fixture},
      {"gini equals mean-absolute-difference oracle", gini_oracle},
      {"balancer on Zipf corpus", balancer_zipf},
      {"duplicate injection and exact k-NN", dedup_injection},
      {"clip selection equals brute-force greedy", segmenter_oracle},
      {"salience closed form", salience_closed_form},
      {"negative quality gate and source adapters", negative_gate},
      {"mini end-to-end build", mini_build},
      {"audit Monte Carlo coverage", audit_monte_carlo},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, fn] : checks) {
    ++index;
    Result o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.failures.push_back(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char t[32];
    std::snprintf(t, sizeof t, "%.1f s", secs);
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << name << ": " << o.detail.str() << " (" << t
              << ")\n";
    for (const auto& f : o.failures) std::cout << "       " << f << "\n";
    std::cout.flush();
    failed += !o.pass;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << checks.size() - static_cast<std::size_t>(failed) << "/"
            << checks.size() << "\n";
  return failed ? 1 : 0;
}
