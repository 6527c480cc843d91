#include "avicurate/audit.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>

#include "avicurate/csv.hpp"
#include "avicurate/dsp.hpp"
#include "avicurate/error.hpp"
#include "avicurate/rng.hpp"

namespace avicurate {

namespace fs = std::filesystem;

namespace {

// Guards against 656.0000000001 style float noise turning into 657.
std::size_t ceil_count(double x) { return static_cast<std::size_t>(std::ceil(x - 1e-9)); }

const std::vector<std::string> kLogHeader{"clip_id", "outcome", "corrected_start_s", "auditor", "timestamp", "round"};

}  // namespace

CochranSize cochran(double p_hat, double margin, double z, std::size_t population) {
  if (!(p_hat > 0.0 && p_hat < 1.0)) throw Error(ErrorCode::InvalidProportion, "p_hat must lie in (0, 1)");
  if (!(margin > 0.0)) throw Error(ErrorCode::InvalidProportion, "margin must be positive");
  if (!(z > 0.0)) throw Error(ErrorCode::InvalidArgument, "z must be positive");
  if (population == 0) throw Error(ErrorCode::InvalidArgument, "population must be >= 1");
  CochranSize c;
  c.n0_exact = z * z * p_hat * (1.0 - p_hat) / (margin * margin);
  c.n0 = ceil_count(c.n0_exact);
  const double n_star = c.n0_exact / (1.0 + c.n0_exact / static_cast<double>(population));
  c.n_star = std::min(population, ceil_count(n_star));
  return c;
}

AuditPlan plan_audit(double p_hat, double margin, double z, const std::vector<std::string>& population_ids,
                     std::uint64_t seed, std::optional<std::size_t> sample_size, int round,
                     const std::vector<std::string>& exclude) {
  const CochranSize c = cochran(p_hat, margin, z, population_ids.size());
  AuditPlan plan;
  plan.round = round;
  plan.p_hat = p_hat;
  plan.margin = margin;
  plan.z = z;
  plan.population = population_ids.size();
  plan.n0 = c.n0;
  plan.n_star = c.n_star;
  plan.seed = seed;

  // Sort first so the draw depends on the set of ids, not on manifest order.
  std::vector<std::string> pool = population_ids;
  std::sort(pool.begin(), pool.end());
  if (!exclude.empty()) {
    const std::set<std::string> skip(exclude.begin(), exclude.end());
    std::erase_if(pool, [&](const std::string& id) { return skip.count(id) > 0; });
  }
  const std::size_t k = sample_size.value_or(c.n_star);
  if (k > pool.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "audit sample of " + std::to_string(k) + " exceeds " + std::to_string(pool.size()) + " eligible clips");
  }
  Rng rng = make_rng(seed, "audit");
  for (auto i : sample_without_replacement(pool.size(), k, rng)) plan.sampled_clip_ids.push_back(pool[i]);
  return plan;
}

std::string plan_to_json(const AuditPlan& plan) {
  nlohmann::json j{{"round", plan.round},     {"p_hat", plan.p_hat},   {"margin", plan.margin},
                   {"z", plan.z},             {"population", plan.population}, {"n0", plan.n0},
                   {"n_star", plan.n_star},   {"seed", plan.seed},     {"sampled_clip_ids", plan.sampled_clip_ids}};
  return j.dump(2) + "\n";
}

AuditPlan plan_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    AuditPlan p;
    p.round = j.at("round").get<int>();
    p.p_hat = j.at("p_hat").get<double>();
    p.margin = j.at("margin").get<double>();
    p.z = j.at("z").get<double>();
    p.population = j.at("population").get<std::size_t>();
    p.n0 = j.at("n0").get<std::size_t>();
    p.n_star = j.at("n_star").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.sampled_clip_ids = j.at("sampled_clip_ids").get<std::vector<std::string>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("bad audit plan: ") + e.what());
  }
}

std::string_view to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::Correct: return "correct";
    case Outcome::WrongOnset: return "wrong_onset";
    case Outcome::NoiseDominated: return "noise_dominated";
    case Outcome::NoBird: return "no_bird";
  }
  return "correct";
}

Outcome parse_outcome(std::string_view s) {
  for (auto o : {Outcome::Correct, Outcome::WrongOnset, Outcome::NoiseDominated, Outcome::NoBird}) {
    if (to_string(o) == s) return o;
  }
  throw Error(ErrorCode::InvalidVerdict, "unknown outcome '" + std::string(s) + "'");
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double audit_margin(std::size_t correct, std::size_t n, std::size_t population, double z) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "no verdicts");
  const double p = static_cast<double>(correct) / static_cast<double>(n);
  const double fpc = population > 1 && population >= n
                         ? std::sqrt(static_cast<double>(population - n) / static_cast<double>(population - 1))
                         : 1.0;
  return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) * fpc;
}

AuditSummary summarize_counts(std::size_t correct, std::size_t n, std::size_t population, double z) {
  AuditSummary s;
  s.population = population;
  s.n = n;
  s.correct = correct;
  s.z = z;
  s.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  s.error_rate = 1.0 - s.accuracy;
  s.margin = audit_margin(correct, n, population, z);
  if (correct == n || correct == 0) {
    s.caveat = "observed proportion at the boundary; the normal-approximation margin collapses to 0";
  }
  return s;
}

std::vector<AuditVerdict> read_verdict_log(const fs::path& path) {
  std::vector<AuditVerdict> out;
  if (!fs::exists(path)) return out;
  const csv::Table t = csv::read(path);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    AuditVerdict v;
    v.clip_id = t.at(r, "clip_id");
    v.outcome = parse_outcome(t.at(r, "outcome"));
    const std::string& cs = t.at(r, "corrected_start_s");
    if (!cs.empty()) v.corrected_start_s = std::stod(cs);
    v.auditor = t.at(r, "auditor");
    v.timestamp = t.at(r, "timestamp");
    v.round = std::stoi(t.at(r, "round"));
    out.push_back(std::move(v));
  }
  return out;
}

AuditSummary summarize_log(const std::vector<AuditVerdict>& verdicts, std::size_t population, double z) {
  if (verdicts.empty()) throw Error(ErrorCode::IncompleteRound, "no verdicts recorded");
  std::size_t correct = 0;
  std::set<int> rounds;
  std::map<std::string, std::size_t> by;
  for (auto o : {Outcome::Correct, Outcome::WrongOnset, Outcome::NoiseDominated, Outcome::NoBird}) by[std::string(to_string(o))] = 0;
  for (const auto& v : verdicts) {
    correct += v.outcome == Outcome::Correct;
    ++by[std::string(to_string(v.outcome))];
    rounds.insert(v.round);
  }
  AuditSummary s = summarize_counts(correct, verdicts.size(), population, z);
  s.rounds.assign(rounds.begin(), rounds.end());
  s.by_outcome = std::move(by);
  return s;
}

AuditSession::AuditSession(AuditPlan plan, fs::path log_path, std::map<std::string, AuditClip> clips,
                           SegmentConfig segment_config)
    : plan_(std::move(plan)),
      log_path_(std::move(log_path)),
      clips_(std::move(clips)),
      segment_config_(segment_config) {
  const std::set<std::string> planned(plan_.sampled_clip_ids.begin(), plan_.sampled_clip_ids.end());
  for (auto& v : read_verdict_log(log_path_)) {
    if (v.round != plan_.round) continue;
    if (!planned.count(v.clip_id)) throw Error(ErrorCode::UnknownClip, "log names unplanned clip " + v.clip_id);
    if (!verdicts_.emplace(v.clip_id, v).second) {
      throw Error(ErrorCode::DuplicateVerdict, "log holds two verdicts for " + v.clip_id);
    }
  }
}

std::size_t AuditSession::judged() const {
  std::lock_guard lock(mu_);
  return verdicts_.size();
}

bool AuditSession::complete() const {
  std::lock_guard lock(mu_);
  return verdicts_.size() == plan_.sampled_clip_ids.size();
}

std::map<std::string, AuditVerdict> AuditSession::verdicts() const {
  std::lock_guard lock(mu_);
  return verdicts_;
}

std::optional<AuditClip> AuditSession::clip(const std::string& clip_id) const {
  std::lock_guard lock(mu_);
  const auto it = clips_.find(clip_id);
  if (it == clips_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> AuditSession::next_for(const std::string& auditor) {
  std::lock_guard lock(mu_);
  for (const auto& id : plan_.sampled_clip_ids) {
    if (verdicts_.count(id)) continue;
    const auto lease = leases_.find(id);
    if (lease != leases_.end() && lease->second != auditor) continue;
    leases_[id] = auditor;
    return id;
  }
  return std::nullopt;
}

void AuditSession::validate(const AuditVerdict& v) const {
  if (std::find(plan_.sampled_clip_ids.begin(), plan_.sampled_clip_ids.end(), v.clip_id) ==
      plan_.sampled_clip_ids.end()) {
    throw Error(ErrorCode::UnknownClip, "clip " + v.clip_id + " is not in audit round " + std::to_string(plan_.round));
  }
  if (v.round != plan_.round) throw Error(ErrorCode::InvalidVerdict, "verdict round does not match the plan");
  if (verdicts_.count(v.clip_id)) throw Error(ErrorCode::DuplicateVerdict, "clip " + v.clip_id + " already judged");
  const bool wants_start = v.outcome == Outcome::WrongOnset;
  if (wants_start != v.corrected_start_s.has_value()) {
    throw Error(ErrorCode::InvalidVerdict, "corrected_start_s is required for wrong_onset and only for it");
  }
  if (v.corrected_start_s && !(std::isfinite(*v.corrected_start_s) && *v.corrected_start_s >= 0.0)) {
    throw Error(ErrorCode::InvalidVerdict, "corrected_start_s must be a non-negative number");
  }
}

Remediation AuditSession::record(AuditVerdict v) {
  std::lock_guard lock(mu_);
  validate(v);
  if (v.timestamp.empty()) v.timestamp = utc_timestamp();

  // Work out any file change before touching the log, so a verdict that
  // cannot be applied is rejected rather than half-recorded.
  Remediation rem;
  rem.action = "none";
  rem.clip_id = v.clip_id;
  std::optional<ExtractedClip> rewrite;
  const auto clip_it = clips_.find(v.clip_id);
  const bool have_clip = clip_it != clips_.end();
  if (have_clip) rem.old_start_s = rem.new_start_s = clip_it->second.start_s;

  if ((v.outcome == Outcome::WrongOnset || v.outcome == Outcome::NoBird) && !have_clip) {
    throw Error(ErrorCode::MissingClip, "no source information for " + v.clip_id);
  }
  ClipBuffer source;
  if (v.outcome == Outcome::WrongOnset) {
    source = decode_and_resample(clip_it->second.source_path, segment_config_.sample_rate);
    try {
      rewrite = extract_at(source, *v.corrected_start_s, segment_config_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OutOfRange) throw;
      throw Error(ErrorCode::InvalidVerdict, "corrected window falls outside the source recording");
    }
    rem.action = "reextracted";
    rem.new_clip_id = v.clip_id;
    rem.new_start_s = *v.corrected_start_s;
  } else if (v.outcome == Outcome::NoBird) {
    source = decode_and_resample(clip_it->second.source_path, segment_config_.sample_rate);
    const AuditClip& bad = clip_it->second;
    std::vector<Eigen::Index> occupied;
    for (const auto& [_, c] : clips_) {
      if (c.catalog_id == bad.catalog_id) occupied.push_back(segment_config_.to_samples(c.start_s));
    }
    std::vector<SegmentCandidate> picks;
    try {
      picks = select_clips(scan_windows(source, bad.catalog_id, segment_config_), 1, segment_config_, occupied);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooShort) throw;
    }
    if (picks.empty()) {
      rem.action = "removed";
    } else {
      rewrite = extract(source, picks.front(), segment_config_);
      rem.action = "replaced";
      rem.new_start_s = picks.front().start_s;
      rem.new_clip_id = clip_stem(bad.catalog_id, picks.front().start_s);
    }
  }

  csv::append_durable(log_path_, kLogHeader,
                      {v.clip_id, std::string(to_string(v.outcome)),
                       v.corrected_start_s ? csv::fmt_double(*v.corrected_start_s, 10) : std::string{}, v.auditor,
                       v.timestamp, std::to_string(v.round)});
  verdicts_.emplace(v.clip_id, v);
  leases_.erase(v.clip_id);

  if (rem.action == "reextracted") {
    write_wav(rewrite->clip, clip_it->second.clip_path);
    clip_it->second.start_s = rem.new_start_s;
  } else if (rem.action == "replaced" || rem.action == "removed") {
    AuditClip old = clip_it->second;
    clips_.erase(clip_it);
    std::error_code ec;
    fs::remove(old.clip_path, ec);
    if (rewrite) {
      AuditClip fresh = old;
      fresh.clip_id = rem.new_clip_id;
      fresh.start_s = rem.new_start_s;
      fresh.clip_path = old.clip_path.parent_path() / (rem.new_clip_id + old.clip_path.extension().string());
      write_wav(rewrite->clip, fresh.clip_path);
      clips_.emplace(fresh.clip_id, fresh);
    }
  }
  if (hook_) hook_(rem);
  return rem;
}

AuditSummary AuditSession::summary() const {
  std::lock_guard lock(mu_);
  if (verdicts_.size() != plan_.sampled_clip_ids.size()) {
    throw Error(ErrorCode::IncompleteRound, std::to_string(verdicts_.size()) + " of " +
                                                std::to_string(plan_.sampled_clip_ids.size()) + " clips judged");
  }
  std::vector<AuditVerdict> v;
  for (const auto& [_, x] : verdicts_) v.push_back(x);
  return summarize_log(v, plan_.population, plan_.z);
}

Image clip_spectrogram(const ClipBuffer& clip, int width, int height) {
  const MelSpectrogram mel = mel_spectrogram(clip, 80, 512, 128);
  return render_power(mel.frames, width, height);
}

Image render_grid(const std::vector<std::string>& clip_ids, std::size_t page,
                  const std::function<ClipBuffer(const std::string&)>& loader) {
  constexpr std::size_t kPerPage = kGridColumns * kGridRows;
  const std::size_t first = page * kPerPage;
  if (first >= clip_ids.size()) throw Error(ErrorCode::MissingClip, "grid page " + std::to_string(page) + " is empty");
  const std::size_t last = std::min(clip_ids.size(), first + kPerPage);

  constexpr int cell_w = kGridWidth / kGridColumns, cell_h = kGridHeight / kGridRows;
  constexpr int label_h = 40, pad = 4, text_scale = 4;
  const Rgb background{24, 24, 24}, strip{0, 0, 0}, ink{240, 240, 240};
  Image grid(kGridWidth, kGridHeight, background);

  for (std::size_t i = first; i < last; ++i) {
    const int cell = static_cast<int>(i - first);
    const int x = (cell % kGridColumns) * cell_w, y = (cell / kGridColumns) * cell_h;
    ClipBuffer clip;
    try {
      clip = loader(clip_ids[i]);
    } catch (const Error& e) {
      throw Error(ErrorCode::MissingClip, "cannot load " + clip_ids[i] + ": " + e.what());
    }
    if (clip.empty()) throw Error(ErrorCode::MissingClip, "empty clip " + clip_ids[i]);
    fill_rect(grid, x + pad, y + pad, cell_w - 2 * pad, label_h - pad, strip);
    std::string label = clip_ids[i];
    const std::size_t max_chars = static_cast<std::size_t>((cell_w - 4 * pad) / (6 * text_scale));
    if (label.size() > max_chars) label.resize(max_chars);
    draw_text(grid, x + 2 * pad, y + pad + (label_h - pad - text_height(text_scale)) / 2, label, text_scale, ink);
    blit(grid, clip_spectrogram(clip, cell_w - 2 * pad, cell_h - label_h - pad), x + pad, y + label_h);
  }
  return grid;
}

}  // namespace avicurate
