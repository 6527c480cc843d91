#include "avicurate/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <set>
#include <thread>

#include "avicurate/csv.hpp"
#include "avicurate/dsp.hpp"
#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"
#include "avicurate/rng.hpp"

namespace avicurate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, std::vector<std::string>> kGraph{
    {"fetch-metadata", {}},
    {"download", {"fetch-metadata"}},
    {"dedup", {"download"}},
    {"extract", {"dedup"}},
    {"balance", {"extract"}},
    {"curate-negatives", {}},
    {"merge", {"dedup", "balance", "curate-negatives"}},
    {"split", {"merge"}},
};

const std::vector<std::string> kOrder{"fetch-metadata", "download",         "dedup", "extract",
                                      "balance",        "curate-negatives", "merge", "split"};

const std::vector<std::string> kAuditDeps{"split"};

std::string audit_stage(int round) { return "audit-sample/round" + std::to_string(round); }

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// (by index) is rethrown after every worker has stopped.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string g17(double v) { return csv::fmt_double(v, 17); }

void link_or_copy(const fs::path& from, const fs::path& to) {
  fs::create_directories(to.parent_path());
  std::error_code ec;
  fs::remove(to, ec);
  fs::create_hard_link(from, to, ec);
  if (ec) fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void reset_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

std::string recording_file(std::int64_t id) { return "XC" + std::to_string(id) + ".flac"; }

// Positive clip table written by extract and read by balance and merge.
struct ClipRow {
  std::string clip_id;
  std::int64_t catalog_id = 0;
  std::string species;
  std::string quality;
  double start_s = 0.0;
  double rms = 0.0;
  bool clipped = false;
  double mean_contrast = 0.0;
  double mean_centroid = 0.0;
  double salience = 0.0;
  int cluster_id = -1;
  std::string path;  // relative to the workspace
};

const std::vector<std::string> kClipHeader{"clip_id",       "catalog_id",    "species",  "quality",
                                           "start_s",       "rms",           "clipped",  "mean_contrast",
                                           "mean_centroid", "salience",      "cluster_id", "path"};

void write_clip_rows(const fs::path& path, const std::vector<ClipRow>& rows) {
  csv::Table t;
  t.header = kClipHeader;
  for (const auto& r : rows) {
    t.rows.push_back({r.clip_id, std::to_string(r.catalog_id), r.species, r.quality, csv::fmt_double(r.start_s, 10),
                      g17(r.rms), r.clipped ? "1" : "0", g17(r.mean_contrast), g17(r.mean_centroid), g17(r.salience),
                      r.cluster_id < 0 ? std::string{} : std::to_string(r.cluster_id), r.path});
  }
  csv::write(path, t);
}

std::vector<ClipRow> read_clip_rows(const fs::path& path) {
  const csv::Table t = csv::read(path);
  std::vector<ClipRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    ClipRow r;
    r.clip_id = t.at(i, "clip_id");
    r.catalog_id = std::stoll(t.at(i, "catalog_id"));
    r.species = t.at(i, "species");
    r.quality = t.at(i, "quality");
    r.start_s = std::stod(t.at(i, "start_s"));
    r.rms = std::stod(t.at(i, "rms"));
    r.clipped = t.at(i, "clipped") == "1";
    r.mean_contrast = std::stod(t.at(i, "mean_contrast"));
    r.mean_centroid = std::stod(t.at(i, "mean_centroid"));
    r.salience = std::stod(t.at(i, "salience"));
    const std::string& c = t.at(i, "cluster_id");
    r.cluster_id = c.empty() ? -1 : std::stoi(c);
    r.path = t.at(i, "path");
    out.push_back(std::move(r));
  }
  return out;
}

json balance_report_json(const BalanceReport& r) {
  return {{"n_species", r.n_species},
          {"n_clips_before", r.n_clips_before},
          {"n_clips_after", r.n_clips_after},
          {"gini_before", r.gini_before},
          {"gini_after", r.gini_after},
          {"mean_per_species_before", r.mean_per_species_before},
          {"mean_per_species_after", r.mean_per_species_after},
          {"n_base", r.n_base},
          {"n_base_selected", r.n_base_selected},
          {"n_backfilled", r.n_backfilled},
          {"n_trimmed", r.n_trimmed},
          {"unique_clusters", r.unique_clusters},
          {"per_species_counts", r.per_species_counts}};
}

// Spacing between outbound requests across all download workers.
class Throttle {
 public:
  explicit Throttle(double delay_s) : delay_(delay_s) {}
  void wait() {
    if (delay_ <= 0) return;
    std::unique_lock lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    if (next_ > now) std::this_thread::sleep_until(next_);
    next_ = std::max(now, next_) + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double>(delay_));
  }

 private:
  double delay_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

std::string url_extension(const std::string& url) {
  std::string path = url.substr(0, url.find_first_of("?#"));
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return ".bin";
  std::string ext = path.substr(dot);
  return ext.size() > 6 ? ".bin" : ext;
}

}  // namespace

const std::vector<std::string>& stage_names() { return kOrder; }

const std::vector<std::string>& stage_dependencies(const std::string& stage) {
  if (stage.rfind("audit-sample", 0) == 0) return kAuditDeps;
  const auto it = kGraph.find(stage);
  if (it == kGraph.end()) throw Error(ErrorCode::InvalidArgument, "unknown stage '" + stage + "'");
  return it->second;
}

// Per-run state handed to a stage body.
struct Workspace::StageContext {
  Workspace& ws;
  const RunOptions& options;
  json details = json::object();
  std::vector<fs::path> outputs;
  int jobs = 1;

  StageContext(Workspace& w, const RunOptions& o) : ws(w), options(o) {}

  fs::path path(const std::string& rel) const { return ws.root_ / rel; }
  std::string rel(const fs::path& p) const { return p.lexically_relative(ws.root_).generic_string(); }
};

Workspace::Workspace(fs::path root, RunConfig config) : root_(std::move(root)), config_(std::move(config)) {
  validate(config_);
  fs::create_directories(root_);
  const fs::path mf = root_ / "run_manifest.json";
  if (fs::exists(mf)) {
    try {
      manifest_ = json::parse(read_text(mf));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigInvalid, "corrupt run manifest: " + std::string(e.what()));
    }
  }
  if (!manifest_.is_object()) manifest_ = json::object();
  if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
  manifest_["config"] = config_to_json(config_);
}

json Workspace::run_manifest() const {
  std::lock_guard lock(mu_);
  return manifest_;
}

void Workspace::save_manifest() const { write_text_atomic(root_ / "run_manifest.json", manifest_.dump(2) + "\n"); }

std::string Workspace::fingerprint(const std::string& stage, const RunOptions& options) const {
  const json cfg = config_to_json(config_);
  json basis{{"stage", stage}};
  if (stage == "fetch-metadata") {
    basis["catalog"] = {{"endpoint", config_.catalog.endpoint},
                        {"group", config_.catalog.group},
                        {"countries", config_.catalog.countries},
                        {"min_duration_s", config_.catalog.min_duration_s}};
  } else if (stage == "download") {
    basis["sample_rate"] = kSampleRate;
  } else if (stage == "dedup") {
    basis["dedup"] = cfg["dedup"];
  } else if (stage == "extract") {
    basis["extract"] = cfg["extract"];
  } else if (stage == "balance") {
    basis["balance"] = cfg["balance"];
    basis["seed"] = config_.seed;
  } else if (stage == "curate-negatives") {
    basis["negatives"] = cfg["negatives"];
    basis["seed"] = config_.seed;
    // Source trees are inputs too: fold in every file's path and size.
    std::string listing;
    for (const auto& src : config_.negatives.sources) {
      for (const auto& f : files_under(src.root)) {
        listing += f.lexically_relative(src.root).generic_string() + "\t" + std::to_string(fs::file_size(f)) + "\n";
      }
    }
    basis["source_listing"] = sha256_hex(listing);
  } else if (stage == "split") {
    basis["split"] = cfg["split"];
    basis["seed"] = config_.seed;
  } else if (stage.rfind("audit-sample", 0) == 0) {
    basis["audit"] = cfg["audit"];
    basis["grids"] = options.audit_grids;
  }
  json deps = json::object();
  for (const auto& dep : stage_dependencies(stage)) {
    const auto& rec = manifest_["stages"].contains(dep) ? manifest_["stages"][dep] : json();
    if (rec.is_null()) throw Error(ErrorCode::MissingDependency, stage + " needs " + dep + " to run first");
    for (const auto& [p, _] : rec["outputs"].items()) {
      if (!fs::exists(root_ / p)) {
        throw Error(ErrorCode::MissingDependency, dep + " output " + p + " is missing; re-run " + dep);
      }
    }
    // Split reads only the merged table. Audit remediation rewrites merge's
    // audio records, and that must not make split look stale.
    if (stage == "split") {
      deps[dep] = sha256_hex(rec["outputs"].value("dataset/merged.csv", json()).dump());
    } else {
      deps[dep] = sha256_hex(rec["outputs"].dump());
    }
  }
  basis["inputs"] = deps;
  return sha256_hex(basis.dump());
}

bool Workspace::up_to_date(const std::string& stage, const std::string& fp) const {
  if (!manifest_["stages"].contains(stage)) return false;
  const json& rec = manifest_["stages"][stage];
  if (rec.value("fingerprint", "") != fp) return false;
  for (const auto& [p, meta] : rec["outputs"].items()) {
    const fs::path f = root_ / p;
    if (!fs::exists(f) || fs::file_size(f) != meta.value("bytes", std::uintmax_t{0})) return false;
  }
  return true;
}

void Workspace::record(const std::string& stage, const std::string& fp, const std::vector<fs::path>& outputs,
                       const StageReport& report) {
  json outs = json::object();
  for (const auto& p : outputs) {
    outs[p.lexically_relative(root_).generic_string()] = {{"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}};
  }
  const fs::path report_path = root_ / "reports" / (stage + ".json");
  json rep{{"stage", stage}, {"status", report.status}, {"seconds", report.seconds}, {"details", report.details}};
  write_text_atomic(report_path, rep.dump(2) + "\n");
  manifest_["stages"][stage] = {{"fingerprint", fp},
                                {"outputs", outs},
                                {"report", report_path.lexically_relative(root_).generic_string()},
                                {"summary", report.details}};
  save_manifest();
}

StageReport Workspace::run(const std::string& stage, const RunOptions& options) {
  std::lock_guard lock(mu_);
  std::string key = stage;
  int audit_round = 0;
  if (stage == "audit-sample") {
    int latest = 0;
    for (const auto& [name, _] : manifest_["stages"].items()) {
      if (name.rfind("audit-sample/round", 0) == 0) latest = std::max(latest, std::stoi(name.substr(18)));
    }
    audit_round = options.audit_round > 0 ? options.audit_round : latest + 1;
    key = audit_stage(audit_round);
  } else {
    stage_dependencies(stage);  // rejects unknown names
  }

  const std::string fp = fingerprint(key, options);
  StageReport report;
  report.stage = key;
  report.fingerprint = fp;
  if (!options.force && up_to_date(key, fp)) {
    report.status = "skipped";
    report.details = manifest_["stages"][key].value("summary", json::object());
    return report;
  }

  StageContext ctx(*this, options);
  ctx.jobs = options.jobs > 0 ? options.jobs : config_.jobs;
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig& cfg = config_;

  if (stage == "fetch-metadata") {
    MetadataQuery q;
    q.group = cfg.catalog.group;
    q.countries = cfg.catalog.countries;
    if (const char* key_env = std::getenv(cfg.catalog.api_key_env.c_str())) q.api_key = key_env;
    FetchOptions fo;
    fo.endpoint = cfg.catalog.endpoint;
    fo.cache_dir = ctx.path("metadata/pages");
    fo.offline = cfg.catalog.offline;
    fo.politeness_delay_s = cfg.catalog.politeness_delay_s;
    fo.retry = cfg.catalog.retry;
    FetchReport fr;
    const auto records = fetch_metadata(q, fo, &fr);
    FilterReport flt;
    const auto kept = filter_metadata(records, &flt, cfg.catalog.min_duration_s);
    write_metadata_csv(ctx.path("metadata/raw.csv"), records);
    write_metadata_csv(ctx.path("metadata/filtered.csv"), kept);

    // Pages of countries no longer configured would be orphans.
    std::set<std::string> prefixes;
    for (const auto& c : q.countries) prefixes.insert(cached_name(q.group, c, 1).substr(0, cached_name(q.group, c, 1).size() - 10));
    for (const auto& f : files_under(fo.cache_dir)) {
      const std::string name = f.filename().string();
      const bool ours = std::any_of(prefixes.begin(), prefixes.end(),
                                    [&](const std::string& p) { return name.rfind(p, 0) == 0 && name.size() == p.size() + 10; });
      if (ours) {
        ctx.outputs.push_back(f);
      } else {
        fs::remove(f);
      }
    }
    ctx.outputs.push_back(ctx.path("metadata/raw.csv"));
    ctx.outputs.push_back(ctx.path("metadata/filtered.csv"));
    ctx.details = {{"pages_fetched", fr.pages_fetched}, {"pages_from_cache", fr.pages_from_cache},
                   {"retries", fr.retries},             {"records", fr.records},
                   {"kept", flt.kept},                  {"excluded", flt.excluded}};

  } else if (stage == "download") {
    const auto records = read_metadata_csv(ctx.path("metadata/filtered.csv"));
    const fs::path dir = ctx.path("recordings");
    fs::create_directories(dir / ".partial");
    std::vector<std::string> status(records.size());
    Throttle throttle(cfg.catalog.politeness_delay_s);
    std::atomic<std::size_t> retries{0};
    parallel_for(records.size(), ctx.jobs, [&](std::size_t i) {
      const RecordingMeta& r = records[i];
      const fs::path target = dir / recording_file(r.catalog_id);
      if (fs::exists(target)) {
        status[i] = "reused";
        return;
      }
      std::string bytes;
      try {
        int attempts = 0;
        if (r.source_url.rfind("file://", 0) != 0) throttle.wait();
        bytes = http_get(r.source_url, cfg.catalog.retry, &attempts);
        retries += static_cast<std::size_t>(std::max(0, attempts - 1));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NetworkFailure) throw;
        status[i] = "download_failed";
        return;
      }
      const std::string stem = "XC" + std::to_string(r.catalog_id);
      const fs::path raw = dir / ".partial" / (stem + url_extension(r.source_url));
      const fs::path part = dir / ".partial" / (stem + ".flac");
      write_text_atomic(raw, bytes);
      try {
        write_flac(decode_and_resample(raw), part);
        fs::rename(part, target);
        status[i] = "downloaded";
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UndecodableFile && e.code() != ErrorCode::ZeroLengthAudio) throw;
        status[i] = "conversion_failed";
      }
      std::error_code ec;
      fs::remove(raw, ec);
      fs::remove(part, ec);
    });
    fs::remove_all(dir / ".partial");

    std::vector<RecordingMeta> ok;
    std::set<std::string> keep;
    std::map<std::string, std::size_t> counts{{"downloaded", 0}, {"reused", 0}, {"download_failed", 0}, {"conversion_failed", 0}};
    csv::Table log;
    log.header = {"catalog_id", "status", "path"};
    for (std::size_t i = 0; i < records.size(); ++i) {
      ++counts[status[i]];
      const bool have = status[i] == "downloaded" || status[i] == "reused";
      const std::string file = recording_file(records[i].catalog_id);
      log.rows.push_back({std::to_string(records[i].catalog_id), status[i], have ? "recordings/" + file : ""});
      if (have) {
        ok.push_back(records[i]);
        keep.insert(file);
      }
    }
    for (const auto& f : files_under(dir)) {
      if (f.parent_path() == dir && f.extension() == ".flac" && !keep.count(f.filename().string())) fs::remove(f);
    }
    csv::write(dir / "downloads.csv", log);
    write_metadata_csv(dir / "corpus.csv", ok);
    for (const auto& r : ok) ctx.outputs.push_back(dir / recording_file(r.catalog_id));
    ctx.outputs.push_back(dir / "downloads.csv");
    ctx.outputs.push_back(dir / "corpus.csv");
    ctx.details = {{"requested", records.size()}, {"usable", ok.size()}, {"retries", retries.load()}, {"status", counts}};

  } else if (stage == "dedup") {
    const auto corpus = read_metadata_csv(ctx.path("recordings/corpus.csv"));
    std::vector<AcousticEmbedding> emb(corpus.size());
    parallel_for(corpus.size(), ctx.jobs, [&](std::size_t i) {
      const ClipBuffer rec = decode_and_resample(ctx.path("recordings/" + recording_file(corpus[i].catalog_id)));
      emb[i] = embed_recording(rec, corpus[i].catalog_id);
    });
    const DuplicateReport dup = find_duplicates(emb, cfg.dedup.k, cfg.dedup.thresholds);
    const auto survivors = apply_removals(corpus, dup.exact);
    std::size_t silent = 0;
    for (const auto& e : emb) silent += !e.indexable;
    write_duplicate_report(ctx.path("dedup/duplicates.csv"), dup);
    write_metadata_csv(ctx.path("dedup/corpus.csv"), survivors);
    ctx.outputs = {ctx.path("dedup/duplicates.csv"), ctx.path("dedup/corpus.csv")};
    ctx.details = {{"recordings_in", corpus.size()},
                   {"exact_pairs", dup.exact.size()},
                   {"near_pairs_advisory", dup.near.size()},
                   {"removed", corpus.size() - survivors.size()},
                   {"not_indexable_silent", silent},
                   {"recordings_out", survivors.size()}};

  } else if (stage == "extract") {
    const auto corpus = read_metadata_csv(ctx.path("dedup/corpus.csv"));
    const fs::path clip_dir = ctx.path("extract/clips");
    reset_dir(clip_dir);
    std::vector<std::vector<ClipRow>> rows(corpus.size());
    std::vector<std::vector<Eigen::VectorXd>> embs(corpus.size());
    std::vector<std::string> skipped(corpus.size());
    parallel_for(corpus.size(), ctx.jobs, [&](std::size_t i) {
      const RecordingMeta& m = corpus[i];
      const ClipBuffer rec = decode_and_resample(ctx.path("recordings/" + recording_file(m.catalog_id)));
      std::vector<SegmentCandidate> picks;
      try {
        picks = select_clips(scan_windows(rec, m.catalog_id, cfg.extract.segment), cfg.extract.max_clips_per_recording,
                             cfg.extract.segment);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TooShort) throw;
        skipped[i] = "too_short";
        return;
      }
      if (picks.empty()) skipped[i] = "no_window_above_threshold";
      for (const auto& c : picks) {
        const ExtractedClip x = extract(rec, c, cfg.extract.segment);
        ClipRow r;
        r.clip_id = clip_stem(m.catalog_id, c.start_s);
        r.catalog_id = m.catalog_id;
        r.species = m.species;
        r.quality = std::string(to_string(m.quality));
        r.start_s = c.start_s;
        r.rms = c.rms;
        r.clipped = x.clipped;
        const FeatureSummary f = summarize(x.clip);
        r.mean_contrast = f.mean_contrast;
        r.mean_centroid = f.mean_centroid;
        r.salience = salience(f, x.clip.sample_rate);
        r.path = "extract/clips/" + r.clip_id + ".wav";
        write_wav(x.clip, ctx.path(r.path));
        rows[i].push_back(r);
        embs[i].push_back(embed(mel_spectrogram(x.clip, kEmbeddingMels, 512, 128), m.catalog_id).vector);
      }
    });
    std::vector<ClipRow> all;
    csv::Table et;
    et.header = {"clip_id"};
    for (int d = 0; d < kEmbeddingDim; ++d) et.header.push_back("e" + std::to_string(d));
    std::map<std::string, std::size_t> skip_counts;
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (!skipped[i].empty()) ++skip_counts[skipped[i]];
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        all.push_back(rows[i][j]);
        clipped += rows[i][j].clipped;
        std::vector<std::string> row{rows[i][j].clip_id};
        for (int d = 0; d < kEmbeddingDim; ++d) row.push_back(g17(embs[i][j][d]));
        et.rows.push_back(std::move(row));
      }
    }
    write_clip_rows(ctx.path("extract/clips.csv"), all);
    csv::write(ctx.path("extract/embeddings.csv"), et);
    for (const auto& r : all) ctx.outputs.push_back(ctx.path(r.path));
    ctx.outputs.push_back(ctx.path("extract/clips.csv"));
    ctx.outputs.push_back(ctx.path("extract/embeddings.csv"));
    ctx.details = {{"recordings", corpus.size()}, {"clips", all.size()}, {"clipped_repaired", clipped},
                   {"recordings_without_clips", skip_counts}};

  } else if (stage == "balance") {
    const auto rows = read_clip_rows(ctx.path("extract/clips.csv"));
    const csv::Table et = csv::read(ctx.path("extract/embeddings.csv"));
    std::map<std::string, Eigen::VectorXd> emb;
    for (std::size_t i = 0; i < et.rows.size(); ++i) {
      Eigen::VectorXd v(kEmbeddingDim);
      for (int d = 0; d < kEmbeddingDim; ++d) v[d] = std::stod(et.rows[i][d + 1]);
      emb[et.rows[i][0]] = std::move(v);
    }
    std::vector<ScoredClip> scored;
    for (const auto& r : rows) {
      ScoredClip s;
      s.clip_id = r.clip_id;
      s.species = r.species;
      s.salience = r.salience;
      s.mean_contrast = r.mean_contrast;
      s.mean_centroid = r.mean_centroid;
      s.quality = parse_quality(r.quality);
      const auto it = emb.find(r.clip_id);
      if (it == emb.end()) throw Error(ErrorCode::MissingDependency, "no embedding for " + r.clip_id);
      s.embedding = it->second;
      scored.push_back(std::move(s));
    }
    if (scored.empty()) throw Error(ErrorCode::EmptyInput, "extract produced no clips");
    BalanceConfig bc = cfg.balance;
    bc.seed = cfg.seed;
    const BalanceResult res = balance(scored, bc);
    std::vector<ClipRow> selected;
    for (std::size_t pos : res.selected) {
      ClipRow r = rows[pos];
      r.cluster_id = scored[pos].cluster_id;
      selected.push_back(std::move(r));
    }
    write_clip_rows(ctx.path("balance/selected.csv"), selected);
    const json rep = balance_report_json(res.report);
    write_text_atomic(ctx.path("balance/report.json"), rep.dump(2) + "\n");
    ctx.outputs = {ctx.path("balance/selected.csv"), ctx.path("balance/report.json")};
    ctx.details = rep;
    ctx.details.erase("per_species_counts");

  } else if (stage == "curate-negatives") {
    const fs::path clip_dir = ctx.path("negatives/clips");
    reset_dir(clip_dir);
    std::vector<NegativeCandidate> cands;
    json load = json::object();
    for (const auto& spec : cfg.negatives.sources) {
      LoadStats st;
      auto c = load_source(spec, &st);
      load[std::string(to_string(spec.name))] = {
          {"listed", st.listed}, {"excluded_class", st.excluded}, {"missing_audio", st.missing_audio}, {"candidates", c.size()}};
      cands.insert(cands.end(), c.begin(), c.end());
    }
    std::map<NegativeSource, SegmentPolicy> policy;
    for (const auto& s : cfg.negatives.sources) policy[s.name] = s.policy;
    std::vector<std::optional<NegativeClip>> gated(cands.size());
    std::vector<std::string> reject(cands.size());
    parallel_for(cands.size(), ctx.jobs, [&](std::size_t i) {
      ClipBuffer clip;
      try {
        gated[i] = curate_candidate(cands[i], policy.at(cands[i].source), cfg.negatives.gate, &clip);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UndecodableFile && e.code() != ErrorCode::ZeroLengthAudio) throw;
        reject[i] = "undecodable";
        return;
      }
      if (!gated[i]) {
        reject[i] = quality_filter(clip, cfg.negatives.gate).reason;
        return;
      }
      write_wav(clip, clip_dir / (gated[i]->clip_id + ".wav"));
    });
    std::vector<NegativeClip> pool;
    std::map<std::string, std::size_t> rejected;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (gated[i]) pool.push_back(*gated[i]);
      else ++rejected[reject[i]];
    }
    std::vector<SourceAllocation> plan;
    const auto chosen = allocate_and_diversify(pool, cfg.negatives.sources, cfg.seed, &plan);
    std::set<std::string> keep;
    for (const auto& c : chosen) keep.insert(c.clip_id + ".wav");
    for (const auto& f : files_under(clip_dir)) {
      if (!keep.count(f.filename().string())) fs::remove(f);
    }
    write_negative_manifest(ctx.path("negatives/manifest.csv"), chosen);
    json alloc = json::array();
    for (const auto& sa : plan) {
      json cats = json::array();
      for (const auto& c : sa.categories) cats.push_back({{"category", c.category}, {"available", c.available}, {"taken", c.taken}});
      alloc.push_back({{"source", std::string(to_string(sa.source))}, {"cap", sa.cap}, {"categories", cats}});
    }
    write_text_atomic(ctx.path("negatives/allocation.json"), alloc.dump(2) + "\n");
    for (const auto& c : chosen) ctx.outputs.push_back(clip_dir / (c.clip_id + ".wav"));
    ctx.outputs.push_back(ctx.path("negatives/manifest.csv"));
    ctx.outputs.push_back(ctx.path("negatives/allocation.json"));
    std::map<std::string, std::size_t> per_source;
    for (const auto& c : chosen) ++per_source[std::string(to_string(c.source))];
    ctx.details = {{"sources", load}, {"candidates", cands.size()}, {"passed_gate", pool.size()},
                   {"rejected", rejected}, {"selected", chosen.size()}, {"per_source", per_source}};

  } else if (stage == "merge") {
    auto positives = read_clip_rows(ctx.path("balance/selected.csv"));
    auto negatives = read_negative_manifest(ctx.path("negatives/manifest.csv"));
    std::map<std::int64_t, RecordingMeta> meta;
    for (auto& m : read_metadata_csv(ctx.path("dedup/corpus.csv"))) meta[m.catalog_id] = std::move(m);

    // The release is class balanced; the larger side loses its least
    // salient clips.
    auto by_salience = [](const auto& a, const auto& b) {
      return a.salience != b.salience ? a.salience > b.salience : a.clip_id < b.clip_id;
    };
    const std::size_t n = std::min(positives.size(), negatives.size());
    const std::size_t dropped_pos = positives.size() - n, dropped_neg = negatives.size() - n;
    std::sort(positives.begin(), positives.end(), by_salience);
    std::sort(negatives.begin(), negatives.end(), by_salience);
    positives.resize(n);
    negatives.resize(n);

    const fs::path audio = ctx.path("dataset/audio");
    reset_dir(audio);
    std::vector<ClipRecord> out;
    for (const auto& p : positives) {
      const RecordingMeta& m = meta.at(p.catalog_id);
      ClipRecord c;
      c.clip_id = p.clip_id;
      c.label = 1;
      c.source = "xeno-canto";
      c.catalog_id = p.catalog_id;
      c.species = p.species;
      c.country = m.country;
      c.latitude = m.latitude;
      c.longitude = m.longitude;
      c.quality = p.quality;
      c.start_s = p.start_s;
      c.salience = p.salience;
      c.cluster_id = p.cluster_id;
      c.license = m.license;
      c.source_file = "recordings/" + recording_file(p.catalog_id);
      c.path = "audio/positive/" + p.clip_id + ".wav";
      link_or_copy(ctx.path(p.path), ctx.path("dataset/" + c.path));
      out.push_back(std::move(c));
    }
    for (const auto& q : negatives) {
      ClipRecord c;
      c.clip_id = q.clip_id;
      c.label = 0;
      c.source = std::string(to_string(q.source));
      c.start_s = q.start_s;
      c.salience = q.salience;
      c.source_file = q.source_file;
      c.path = "audio/negative/" + q.clip_id + ".wav";
      link_or_copy(ctx.path("negatives/clips/" + q.clip_id + ".wav"), ctx.path("dataset/" + c.path));
      out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
    write_manifest(ctx.path("dataset/merged.csv"), out);
    for (const auto& c : out) ctx.outputs.push_back(ctx.path("dataset/" + c.path));
    ctx.outputs.push_back(ctx.path("dataset/merged.csv"));
    ctx.details = {{"positives", n}, {"negatives", n}, {"dropped_positives", dropped_pos}, {"dropped_negatives", dropped_neg}};

  } else if (stage == "split") {
    auto clips = read_manifest(ctx.path("dataset/merged.csv"));
    const auto assign = make_splits(clips, cfg.split, cfg.seed);
    std::map<std::string, std::string> split_of;
    for (const auto& a : assign) split_of[a.clip_id] = a.split;
    json counts = json::object();
    for (auto& c : clips) {
      c.split = split_of.at(c.clip_id);
      const std::string label = c.label == 1 ? "positive" : "negative";
      json& slot = counts[c.split][label];
      slot = slot.is_null() ? 1 : slot.get<int>() + 1;
    }
    write_manifest(dataset_manifest(), clips);
    ctx.outputs = {dataset_manifest()};
    ctx.details = {{"clips", clips.size()}, {"splits", counts}};

  } else if (stage == "audit-sample") {
    const auto clips = read_manifest(dataset_manifest());
    std::vector<std::string> population;
    for (const auto& c : clips) {
      if (c.label == 1) population.push_back(c.clip_id);
    }
    if (population.empty()) throw Error(ErrorCode::EmptyInput, "no positive clips to audit");
    std::vector<std::string> earlier;
    for (int r = 1; r < audit_round; ++r) {
      const fs::path p = ctx.path("audit/round" + std::to_string(r) + "/plan.json");
      if (fs::exists(p)) {
        const auto ids = plan_from_json(read_text(p)).sampled_clip_ids;
        earlier.insert(earlier.end(), ids.begin(), ids.end());
      }
    }
    const std::uint64_t seed = static_cast<std::size_t>(audit_round) <= cfg.audit.round_seeds.size()
                                   ? cfg.audit.round_seeds[audit_round - 1]
                                   : cfg.seed + static_cast<std::uint64_t>(audit_round) - 1;
    std::optional<std::size_t> size = cfg.audit.sample_size;
    if (size) *size = std::min(*size, population.size() - std::min(population.size(), earlier.size()));
    const AuditPlan plan =
        plan_audit(cfg.audit.p_hat, cfg.audit.margin, cfg.audit.z, population, seed, size, audit_round, earlier);
    const fs::path dir = ctx.path("audit/round" + std::to_string(audit_round));
    fs::remove_all(dir / "grids");
    write_text_atomic(dir / "plan.json", plan_to_json(plan));
    ctx.outputs.push_back(dir / "plan.json");
    std::size_t pages = 0;
    if (options.audit_grids) {
      std::map<std::string, std::string> path_of;
      for (const auto& c : clips) path_of[c.clip_id] = c.path;
      const std::size_t per_page = kGridColumns * kGridRows;
      pages = (plan.sampled_clip_ids.size() + per_page - 1) / per_page;
      for (std::size_t p = 0; p < pages; ++p) {
        const Image img = render_grid(plan.sampled_clip_ids, p, [&](const std::string& id) {
          return decode_and_resample(ctx.path("dataset/" + path_of.at(id)));
        });
        char name[32];
        std::snprintf(name, sizeof name, "page_%03zu.png", p + 1);
        write_png(img, dir / "grids" / name);
        ctx.outputs.push_back(dir / "grids" / name);
      }
    }
    ctx.details = {{"round", audit_round}, {"seed", seed}, {"population", plan.population}, {"n0", plan.n0},
                   {"n_star", plan.n_star}, {"sample_size", plan.sampled_clip_ids.size()}, {"grid_pages", pages}};
  }

  report.status = "completed";
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.details = std::move(ctx.details);
  record(key, fp, ctx.outputs, report);
  return report;
}

std::vector<StageReport> Workspace::run_all(const RunOptions& options) {
  std::vector<StageReport> out;
  for (const auto& s : kOrder) out.push_back(run(s, options));
  return out;
}

std::unique_ptr<AuditSession> Workspace::open_audit(int round) {
  std::lock_guard lock(mu_);
  if (round <= 0) {
    for (const auto& [name, _] : manifest_["stages"].items()) {
      if (name.rfind("audit-sample/round", 0) == 0) round = std::max(round, std::stoi(name.substr(18)));
    }
  }
  const fs::path dir = root_ / "audit" / ("round" + std::to_string(round));
  if (round <= 0 || !fs::exists(dir / "plan.json")) {
    throw Error(ErrorCode::MissingDependency, "no audit plan; run audit-sample first");
  }
  AuditPlan plan = plan_from_json(read_text(dir / "plan.json"));
  std::map<std::string, AuditClip> clips;
  for (const auto& c : read_manifest(dataset_manifest())) {
    if (c.label != 1) continue;
    clips[c.clip_id] = AuditClip{c.clip_id, c.catalog_id, c.start_s, root_ / "dataset" / c.path, root_ / c.source_file};
  }
  auto session = std::make_unique<AuditSession>(std::move(plan), dir / "verdicts.csv", std::move(clips),
                                                config_.extract.segment);
  session->set_remediation_hook([this](const Remediation& r) { apply_remediation(r); });
  return session;
}

void Workspace::apply_remediation(const Remediation& r) {
  std::lock_guard lock(mu_);
  auto clips = read_manifest(dataset_manifest());
  const auto it = std::find_if(clips.begin(), clips.end(), [&](const ClipRecord& c) { return c.clip_id == r.clip_id; });
  if (it == clips.end()) return;
  json& merge_outs = manifest_["stages"]["merge"]["outputs"];
  auto track = [&](const std::string& rel) {
    const fs::path p = root_ / "dataset" / rel;
    merge_outs["dataset/" + rel] = {{"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}};
  };
  if (r.action == "reextracted") {
    it->start_s = r.new_start_s;
    track(it->path);
  } else if (r.action == "replaced") {
    merge_outs.erase("dataset/" + it->path);
    it->clip_id = r.new_clip_id;
    it->start_s = r.new_start_s;
    it->path = "audio/positive/" + r.new_clip_id + ".wav";
    const ClipBuffer clip = decode_and_resample(root_ / "dataset" / it->path);
    it->salience = salience(summarize(clip), clip.sample_rate);
    track(it->path);
  } else if (r.action == "removed") {
    merge_outs.erase("dataset/" + it->path);
    clips.erase(it);
  } else {
    return;
  }
  write_manifest(dataset_manifest(), clips);
  manifest_["stages"]["split"]["outputs"]["dataset/manifest.csv"] = {{"sha256", sha256_file(dataset_manifest())},
                                                                    {"bytes", fs::file_size(dataset_manifest())}};
  save_manifest();
}

json Workspace::report() const {
  std::lock_guard lock(mu_);
  const json& stages = manifest_["stages"];
  if (stages.empty()) throw Error(ErrorCode::EmptyWorkspace, "no completed stages in " + root_.string());

  json out = json::object();
  json status = json::object();
  for (const auto& s : kOrder) status[s] = stages.contains(s) ? "completed" : "pending";
  out["stages"] = status;
  for (const auto& s : kOrder) {
    if (stages.contains(s)) out["stage_summaries"][s] = stages[s].value("summary", json::object());
  }

  // Most downstream clip table available.
  std::vector<ClipRecord> clips;
  std::string basis;
  if (stages.contains("split") && fs::exists(dataset_manifest())) {
    clips = read_manifest(dataset_manifest());
    basis = "dataset/manifest.csv";
  } else if (stages.contains("merge")) {
    clips = read_manifest(root_ / "dataset/merged.csv");
    basis = "dataset/merged.csv";
  } else if (stages.contains("balance")) {
    for (const auto& r : read_clip_rows(root_ / "balance/selected.csv")) {
      ClipRecord c;
      c.clip_id = r.clip_id;
      c.species = r.species;
      c.quality = r.quality;
      c.catalog_id = r.catalog_id;
      clips.push_back(std::move(c));
    }
    basis = "balance/selected.csv";
  }
  out["basis"] = basis;
  if (basis.empty()) return out;

  std::size_t pos = 0, neg = 0, ab = 0;
  std::map<std::string, std::size_t> per_species, quality, country, per_class;
  json splits = json::object();
  for (const auto& c : clips) {
    if (c.label == 1) {
      ++pos;
      ++per_species[c.species];
      ++quality[c.quality.empty() ? "unrated" : c.quality];
      ab += c.quality == "A" || c.quality == "B";
      ++country[c.country.empty() ? "unknown" : c.country];
    } else {
      ++neg;
      ++per_class[c.source];
    }
    if (!c.split.empty()) {
      const std::string label = c.label == 1 ? "positive" : "negative";
      json& slot = splits[c.split][label];
      slot = slot.is_null() ? 1 : slot.get<int>() + 1;
    }
  }
  auto shares = [&](const std::map<std::string, std::size_t>& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = pos ? static_cast<double>(v) / pos : 0.0;
    return j;
  };
  const double mean = per_species.empty() ? 0.0 : static_cast<double>(pos) / per_species.size();
  const double g_after = per_species.empty() ? 0.0 : gini(per_species);
  std::optional<double> g_before;
  if (stages.contains("balance") && fs::exists(root_ / "balance/report.json")) {
    g_before = json::parse(read_text(root_ / "balance/report.json")).value("gini_before", 0.0);
  }

  out["total_clips"] = clips.size();
  out["positive"] = pos;
  out["negative"] = neg;
  out["unique_species"] = per_species.size();
  out["clip_duration_s"] = 3.0;
  out["sample_rate_hz"] = kSampleRate;
  out["bit_depth"] = 16;
  out["format"] = "WAV (16-bit PCM)";
  out["mean_samples_per_species"] = mean;
  out["gini_post_balancing"] = g_after;
  if (g_before) out["gini_pre_balancing"] = *g_before;
  out["quality_ab_share"] = pos ? static_cast<double>(ab) / pos : 0.0;
  out["quality_shares"] = shares(quality);
  out["country_shares"] = shares(country);
  out["per_class_counts"] = {{"positive", pos}, {"negative", neg}};
  out["negative_sources"] = per_class;
  out["per_species_counts"] = per_species;
  if (!splits.empty()) out["splits"] = splits;

  char buf[64];
  json table = json::array();
  auto row = [&](const char* name, const std::string& value) { table.push_back({{"property", name}, {"value", value}}); };
  row("Total clips", std::to_string(clips.size()));
  row("Positive (bird presence)", std::to_string(pos));
  row("Negative (bird absence)", std::to_string(neg));
  row("Unique bird species", std::to_string(per_species.size()));
  row("Clip duration", "3 seconds");
  row("Sample rate", "16 kHz");
  row("Bit depth", "16-bit");
  row("Format", "WAV (16-bit PCM)");
  std::snprintf(buf, sizeof buf, "%.1f", mean);
  row("Mean samples per species", buf);
  std::snprintf(buf, sizeof buf, "%.3f", g_after);
  row("Gini coefficient (post-balancing)", buf);
  std::snprintf(buf, sizeof buf, "%.1f%%", pos ? 100.0 * ab / pos : 0.0);
  row("Quality rating A/B", buf);
  out["table"] = table;

  json audits = json::array();
  for (int r = 1;; ++r) {
    const fs::path dir = root_ / "audit" / ("round" + std::to_string(r));
    if (!fs::exists(dir / "plan.json")) break;
    const AuditPlan plan = plan_from_json(read_text(dir / "plan.json"));
    const auto verdicts = read_verdict_log(dir / "verdicts.csv");
    json a{{"round", r}, {"planned", plan.sampled_clip_ids.size()}, {"judged", verdicts.size()}};
    if (!verdicts.empty() && verdicts.size() == plan.sampled_clip_ids.size()) {
      const AuditSummary s = summarize_log(verdicts, plan.population, plan.z);
      a["accuracy"] = s.accuracy;
      a["margin"] = s.margin;
      a["by_outcome"] = s.by_outcome;
    }
    audits.push_back(a);
  }
  if (!audits.empty()) out["audit"] = audits;
  return out;
}

}  // namespace avicurate
