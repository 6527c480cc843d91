#include <set>

#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"
#include "avicurate/pipeline.hpp"

namespace avicurate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads only the keys present, rejecting any the section does not know so a
// typo in a config file cannot silently fall back to a default.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) throw Error(ErrorCode::ConfigInvalid, name_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::ConfigInvalid, name_ + "." + key + " has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return doc_.contains(key);
  }
  const json& at(const char* key) const { return doc_.at(key); }

  void finish() const {
    for (const auto& [key, _] : doc_.items()) {
      if (!seen_.count(key)) throw Error(ErrorCode::ConfigInvalid, "unknown key " + name_ + "." + key);
    }
  }

 private:
  const json& doc_;
  std::string name_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

json source_to_json(const NegativeSourceSpec& s, const fs::path& root) {
  json j{{"name", std::string(to_string(s.name))},
         {"quota", s.quota},
         {"policy", std::string(to_string(s.policy))},
         {"excluded_classes", s.excluded_classes},
         {"category_priority", s.category_priority}};
  const fs::path rel = s.root.lexically_relative(root);
  j["dir"] = (!rel.empty() && *rel.begin() != "..") ? rel.generic_string() : s.root.generic_string();
  if (s.category_cap) j["category_cap"] = *s.category_cap;
  return j;
}

NegativeSourceSpec source_from_json(const json& j, const fs::path& root) {
  Section sec(j, "negatives.sources[]");
  NegativeSourceSpec s;
  std::string name, policy, dir;
  sec.get("name", name);
  try {
    s.name = parse_negative_source(name);
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigInvalid, "unknown negative source '" + name + "'");
  }
  // Source defaults come from the built-in table, so a config can list only
  // what it changes.
  for (const auto& d : paper_negative_sources(root)) {
    if (d.name == s.name) s = d;
  }
  sec.get("quota", s.quota);
  if (sec.has("policy")) {
    sec.get("policy", policy);
    try {
      s.policy = parse_segment_policy(policy);
    } catch (const Error&) {
      throw Error(ErrorCode::ConfigInvalid, "unknown segmentation policy '" + policy + "'");
    }
  }
  sec.get("excluded_classes", s.excluded_classes);
  sec.get("category_priority", s.category_priority);
  if (sec.has("category_cap")) {
    std::size_t cap = 0;
    sec.get("category_cap", cap);
    s.category_cap = cap;
  }
  if (sec.has("dir")) {
    sec.get("dir", dir);
    s.root = resolve(root, dir);
  }
  sec.finish();
  return s;
}

}  // namespace

RunConfig paper_profile() {
  RunConfig c;
  c.negatives.root = "negatives";
  c.negatives.sources = paper_negative_sources(c.negatives.root);
  return c;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
  if (c.profile != "paper" && c.profile != "custom") fail("profile must be 'paper' or 'custom'");
  if (c.jobs < 1) fail("jobs must be >= 1");
  if (c.catalog.countries.empty()) fail("catalog.countries is empty");
  if (c.catalog.group != "birds") fail("catalog.group must be 'birds'");
  if (c.catalog.min_duration_s < c.extract.segment.window_s) fail("catalog.min_duration_s is below the clip length");
  if (c.catalog.retry.max_attempts < 1) fail("catalog.retry.max_attempts must be >= 1");
  if (c.dedup.k < 1) fail("dedup.k must be >= 1");
  if (!(c.dedup.thresholds.exact > 0 && c.dedup.thresholds.near >= c.dedup.thresholds.exact)) {
    fail("dedup thresholds must satisfy 0 < exact <= near");
  }
  const SegmentConfig& s = c.extract.segment;
  if (!(s.window_s > 0 && s.step_s > 0 && s.min_separation_s >= 0 && s.min_rms >= 0 && s.skip_head_s >= 0)) {
    fail("extract parameters must be positive");
  }
  if (s.sample_rate != kSampleRate) fail("extract sample rate is fixed at 16000");
  if (c.balance.n_target == 0) fail("balance.n_target must be positive");
  if (c.balance.k_clusters < 1) fail("balance.k_clusters must be >= 1");
  if (c.balance.max_iterations < 1) fail("balance.max_iterations must be >= 1");
  try {
    c.negatives.gate.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  std::set<NegativeSource> seen;
  for (const auto& src : c.negatives.sources) {
    if (!seen.insert(src.name).second) fail("negative source listed twice: " + std::string(to_string(src.name)));
  }
  const double total = c.split.train + c.split.val + c.split.test;
  if (c.split.train < 0 || c.split.val < 0 || c.split.test < 0 || std::abs(total - 1.0) > 1e-9) {
    fail("split ratios must be non-negative and sum to 1");
  }
  const AuditConfig& a = c.audit;
  if (!(a.p_hat > 0 && a.p_hat < 1)) fail("audit.p_hat must lie in (0, 1)");
  if (!(a.margin > 0)) fail("audit.margin must be positive");
  if (!(a.z > 0)) fail("audit.z must be positive");
  if (a.port < 0 || a.port > 65535) fail("audit.port out of range");
}

RunConfig config_from_json(const json& doc, const fs::path& base_dir) {
  RunConfig c = paper_profile();
  Section top(doc, "config");
  top.get("profile", c.profile);
  top.get("seed", c.seed);
  top.get("jobs", c.jobs);

  if (top.has("catalog")) {
    Section s(top.at("catalog"), "catalog");
    s.get("endpoint", c.catalog.endpoint);
    s.get("group", c.catalog.group);
    s.get("countries", c.catalog.countries);
    s.get("api_key_env", c.catalog.api_key_env);
    s.get("offline", c.catalog.offline);
    s.get("politeness_delay_s", c.catalog.politeness_delay_s);
    s.get("min_duration_s", c.catalog.min_duration_s);
    if (s.has("retry")) {
      Section r(s.at("retry"), "catalog.retry");
      r.get("max_attempts", c.catalog.retry.max_attempts);
      r.get("initial_backoff_s", c.catalog.retry.initial_backoff_s);
      r.get("max_backoff_s", c.catalog.retry.max_backoff_s);
      r.get("timeout_s", c.catalog.retry.timeout_s);
      r.finish();
    }
    s.finish();
    // A local fixture endpoint may be given relative to the config file.
    if (c.catalog.endpoint.rfind("file://", 0) == 0) {
      const fs::path p = c.catalog.endpoint.substr(7);
      c.catalog.endpoint = "file://" + resolve(base_dir, p).string();
    }
  }
  if (top.has("dedup")) {
    Section s(top.at("dedup"), "dedup");
    s.get("k", c.dedup.k);
    s.get("exact_threshold", c.dedup.thresholds.exact);
    s.get("near_threshold", c.dedup.thresholds.near);
    s.finish();
  }
  if (top.has("extract")) {
    Section s(top.at("extract"), "extract");
    SegmentConfig& g = c.extract.segment;
    s.get("window_s", g.window_s);
    s.get("step_s", g.step_s);
    s.get("min_rms", g.min_rms);
    s.get("min_separation_s", g.min_separation_s);
    s.get("skip_head_s", g.skip_head_s);
    s.get("skip_if_longer_than_s", g.skip_if_longer_than_s);
    s.get("max_clips_per_recording", c.extract.max_clips_per_recording);
    s.finish();
  }
  if (top.has("balance")) {
    Section s(top.at("balance"), "balance");
    s.get("n_target", c.balance.n_target);
    s.get("k_clusters", c.balance.k_clusters);
    s.get("max_iterations", c.balance.max_iterations);
    s.get("bonus_quality_a", c.balance.bonuses.quality_a);
    s.get("bonus_quality_b", c.balance.bonuses.quality_b);
    s.get("bonus_diversity", c.balance.bonuses.diversity);
    s.finish();
  }
  {
    fs::path root = c.negatives.root;
    const json empty = json::object();
    Section s(top.has("negatives") ? top.at("negatives") : empty, "negatives");
    std::string root_str;
    if (s.has("root")) {
      s.get("root", root_str);
      root = root_str;
    }
    root = resolve(base_dir, root);
    c.negatives.root = root;
    if (s.has("sources")) {
      c.negatives.sources.clear();
      if (!s.at("sources").is_array()) throw Error(ErrorCode::ConfigInvalid, "negatives.sources must be a list");
      for (const auto& src : s.at("sources")) c.negatives.sources.push_back(source_from_json(src, root));
    } else {
      c.negatives.sources = paper_negative_sources(root);
    }
    if (s.has("gate")) {
      Section g(s.at("gate"), "negatives.gate");
      g.get("min_rms", c.negatives.gate.min_rms);
      g.get("max_peak", c.negatives.gate.max_peak);
      g.get("min_dynamic_range", c.negatives.gate.min_dynamic_range);
      g.finish();
    }
    s.finish();
  }
  if (top.has("split")) {
    Section s(top.at("split"), "split");
    s.get("train", c.split.train);
    s.get("val", c.split.val);
    s.get("test", c.split.test);
    s.finish();
  }
  if (top.has("audit")) {
    Section s(top.at("audit"), "audit");
    s.get("p_hat", c.audit.p_hat);
    s.get("margin", c.audit.margin);
    s.get("z", c.audit.z);
    s.get("round_seeds", c.audit.round_seeds);
    if (s.has("sample_size") && !s.at("sample_size").is_null()) {
      std::size_t n = 0;
      s.get("sample_size", n);
      c.audit.sample_size = n;
    }
    s.get("host", c.audit.host);
    s.get("port", c.audit.port);
    s.get("token_env", c.audit.token_env);
    s.finish();
  }
  top.finish();
  validate(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  json sources = json::array();
  for (const auto& s : c.negatives.sources) sources.push_back(source_to_json(s, c.negatives.root));
  const SegmentConfig& g = c.extract.segment;
  json j{
      {"profile", c.profile},
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"catalog",
       {{"endpoint", c.catalog.endpoint},
        {"group", c.catalog.group},
        {"countries", c.catalog.countries},
        {"api_key_env", c.catalog.api_key_env},
        {"offline", c.catalog.offline},
        {"politeness_delay_s", c.catalog.politeness_delay_s},
        {"min_duration_s", c.catalog.min_duration_s},
        {"retry",
         {{"max_attempts", c.catalog.retry.max_attempts},
          {"initial_backoff_s", c.catalog.retry.initial_backoff_s},
          {"max_backoff_s", c.catalog.retry.max_backoff_s},
          {"timeout_s", c.catalog.retry.timeout_s}}}}},
      {"dedup",
       {{"k", c.dedup.k},
        {"exact_threshold", c.dedup.thresholds.exact},
        {"near_threshold", c.dedup.thresholds.near}}},
      {"extract",
       {{"window_s", g.window_s},
        {"step_s", g.step_s},
        {"min_rms", g.min_rms},
        {"min_separation_s", g.min_separation_s},
        {"skip_head_s", g.skip_head_s},
        {"skip_if_longer_than_s", g.skip_if_longer_than_s},
        {"max_clips_per_recording", c.extract.max_clips_per_recording}}},
      {"balance",
       {{"n_target", c.balance.n_target},
        {"k_clusters", c.balance.k_clusters},
        {"max_iterations", c.balance.max_iterations},
        {"bonus_quality_a", c.balance.bonuses.quality_a},
        {"bonus_quality_b", c.balance.bonuses.quality_b},
        {"bonus_diversity", c.balance.bonuses.diversity}}},
      {"negatives",
       {{"root", c.negatives.root.generic_string()},
        {"gate",
         {{"min_rms", c.negatives.gate.min_rms},
          {"max_peak", c.negatives.gate.max_peak},
          {"min_dynamic_range", c.negatives.gate.min_dynamic_range}}},
        {"sources", sources}}},
      {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
      {"audit",
       {{"p_hat", c.audit.p_hat},
        {"margin", c.audit.margin},
        {"z", c.audit.z},
        {"round_seeds", c.audit.round_seeds},
        {"sample_size", c.audit.sample_size ? json(*c.audit.sample_size) : json(nullptr)},
        {"host", c.audit.host},
        {"port", c.audit.port},
        {"token_env", c.audit.token_env}}},
  };
  return j;
}

RunConfig load_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  return config_from_json(doc, path.parent_path());
}

}  // namespace avicurate
