#include "avicurate/catalog.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <set>
#include <thread>

#include "avicurate/csv.hpp"
#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"
#include "avicurate/rng.hpp"

namespace avicurate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string str_field(const json& rec, const char* key) {
  const auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  if (it->is_number()) return csv::fmt_double(it->get<double>(), 10);
  throw Error(ErrorCode::MalformedResponse, std::string("field '") + key + "' has an unexpected type");
}

std::optional<double> coord_field(const json& rec, const char* key) {
  const std::string s = str_field(rec, key);
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string trimmed_lower(std::string_view s) {
  std::string out;
  for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
  const auto b = out.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return out.substr(b, out.find_last_not_of(" \t") - b + 1);
}

std::string slug(std::string_view s) {
  std::string out;
  for (unsigned char c : s) out.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '-');
  return out;
}

std::string opt_str(const std::optional<double>& v) { return v ? csv::fmt_double(*v, 10) : std::string{}; }

std::optional<double> opt_parse(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

double parse_length(std::string_view s) {
  double total = 0.0;
  std::size_t start = 0;
  int fields = 0;
  while (start <= s.size()) {
    const auto colon = s.find(':', start);
    const std::string part(s.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start));
    if (part.empty() || part.find_first_not_of("0123456789.") != std::string::npos) {
      throw Error(ErrorCode::MalformedResponse, "bad length '" + std::string(s) + "'");
    }
    total = total * 60.0 + std::stod(part);
    ++fields;
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (fields > 3) throw Error(ErrorCode::MalformedResponse, "bad length '" + std::string(s) + "'");
  return total;
}

CatalogPage parse_catalog_page(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("catalog page is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("recordings") || !doc["recordings"].is_array()) {
    throw Error(ErrorCode::MalformedResponse, "catalog page has no recordings array");
  }
  CatalogPage page;
  auto as_int = [&](const char* key, int fallback) {
    const std::string s = doc.contains(key) ? str_field(doc, key) : std::string{};
    return s.empty() ? fallback : std::stoi(s);
  };
  page.page = as_int("page", 1);
  page.num_pages = as_int("numPages", 1);

  for (const auto& rec : doc["recordings"]) {
    if (!rec.is_object()) throw Error(ErrorCode::MalformedResponse, "recording entry is not an object");
    RecordingMeta m;
    const std::string id = str_field(rec, "id");
    if (id.empty() || id.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorCode::MalformedResponse, "recording without a numeric id");
    }
    m.catalog_id = std::stoll(id);
    const std::string gen = str_field(rec, "gen"), sp = str_field(rec, "sp");
    m.species = gen.empty() || sp.empty() ? gen + sp : gen + " " + sp;
    m.english_name = str_field(rec, "en");
    m.country = str_field(rec, "cnt");
    m.latitude = coord_field(rec, "lat");
    m.longitude = rec.contains("lon") ? coord_field(rec, "lon") : coord_field(rec, "lng");
    m.quality = parse_quality(str_field(rec, "q"));
    const std::string len = str_field(rec, "length");
    m.duration_s = len.empty() ? 0.0 : parse_length(len);
    m.source_url = str_field(rec, "file");
    m.license = str_field(rec, "lic");
    page.records.push_back(std::move(m));
  }
  return page;
}

std::string cached_name(const std::string& group, const std::string& country, int page) {
  char name[32];
  std::snprintf(name, sizeof name, "_p%04d.json", page);
  return slug(group) + "_" + slug(country) + name;
}

std::vector<RecordingMeta> fetch_metadata(const MetadataQuery& query, const FetchOptions& options,
                                          FetchReport* report) {
  if (query.countries.empty()) throw Error(ErrorCode::ConfigInvalid, "metadata query needs at least one country");
  if (options.endpoint.empty() && !options.offline) throw Error(ErrorCode::ConfigInvalid, "no catalog endpoint");
  FetchReport rep;
  std::vector<RecordingMeta> all;
  bool first_request = true;

  for (const auto& country : query.countries) {
    const std::string q = "grp:\"" + query.group + "\" cnt:\"" + country + "\"";
    for (int page = 1, num_pages = 1; page <= num_pages; ++page) {
      const fs::path cached =
          options.cache_dir.empty() ? fs::path{} : options.cache_dir / cached_name(query.group, country, page);
      std::string body;
      if (!cached.empty() && fs::is_regular_file(cached)) {
        body = read_text(cached);
        ++rep.pages_from_cache;
      } else {
        if (options.offline) throw Error(ErrorCode::NetworkFailure, "offline and not cached: " + cached.string());
        if (!first_request && options.politeness_delay_s > 0) {
          std::this_thread::sleep_for(std::chrono::duration<double>(options.politeness_delay_s));
        }
        first_request = false;
        if (options.endpoint.rfind("file://", 0) == 0) {
          // Recorded fixture: pages stored under the cache naming scheme.
          const fs::path page_file = fs::path(options.endpoint.substr(7)) / cached_name(query.group, country, page);
          if (!fs::is_regular_file(page_file)) break;
          body = read_text(page_file);
          parse_catalog_page(body);
          ++rep.pages_fetched;
          if (!cached.empty()) write_text_atomic(cached, body);
          CatalogPage p = parse_catalog_page(body);
          num_pages = std::max(1, p.num_pages);
          for (auto& r : p.records) {
            if (r.country.empty()) r.country = country;
            all.push_back(std::move(r));
          }
          continue;
        }
        std::string url = options.endpoint + "?query=" + url_encode(q) + "&page=" + std::to_string(page);
        if (!query.api_key.empty()) url += "&key=" + url_encode(query.api_key);
        int attempts = 0;
        body = http_get(url, options.retry, &attempts);
        rep.retries += static_cast<std::size_t>(attempts - 1);
        ++rep.pages_fetched;
        // Validate before caching so a garbled page is never replayed.
        parse_catalog_page(body);
        if (!cached.empty()) write_text_atomic(cached, body);
      }
      CatalogPage p = parse_catalog_page(body);
      num_pages = std::max(1, p.num_pages);
      for (auto& r : p.records) {
        if (r.country.empty()) r.country = country;
        all.push_back(std::move(r));
      }
    }
  }

  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.catalog_id < b.catalog_id; });
  all.erase(std::unique(all.begin(), all.end(),
                        [](const auto& a, const auto& b) { return a.catalog_id == b.catalog_id; }),
            all.end());
  rep.records = all.size();
  if (report) *report = rep;
  return all;
}

bool is_unresolved_species(const RecordingMeta& r) {
  static const std::set<std::string> kPlaceholders{"", "unknown", "identity unknown", "mystery mystery",
                                                   "sonus naturalis", "soundscape"};
  return kPlaceholders.count(trimmed_lower(r.species)) > 0 ||
         (kPlaceholders.count(trimmed_lower(r.english_name)) > 0 && !r.english_name.empty());
}

std::vector<RecordingMeta> filter_metadata(const std::vector<RecordingMeta>& records, FilterReport* report,
                                           double min_duration_s) {
  FilterReport rep;
  rep.total_in = records.size();
  for (const char* reason : {"unresolved_species", "missing_url", "too_short"}) rep.excluded[reason] = 0;
  std::vector<RecordingMeta> kept;
  for (const auto& r : records) {
    if (is_unresolved_species(r)) {
      ++rep.excluded["unresolved_species"];
    } else if (r.source_url.empty()) {
      ++rep.excluded["missing_url"];
    } else if (r.duration_s < min_duration_s) {
      ++rep.excluded["too_short"];
    } else {
      kept.push_back(r);
    }
  }
  rep.kept = kept.size();
  if (report) *report = rep;
  return kept;
}

namespace {
const std::vector<std::string> kMetadataHeader{"catalog_id", "species", "english_name", "quality",    "lat",
                                               "lon",        "country", "license",      "source_url", "duration_s"};
const std::vector<std::string> kManifestHeader{
    "clip_id", "label",   "source",  "catalog_id", "species", "country", "lat",         "lon",
    "quality", "start_s", "salience", "cluster_id", "split",  "license", "source_file", "path"};
}  // namespace

void write_metadata_csv(const fs::path& path, const std::vector<RecordingMeta>& records) {
  csv::Table t;
  t.header = kMetadataHeader;
  for (const auto& r : records) {
    t.rows.push_back({std::to_string(r.catalog_id), r.species, r.english_name, std::string(to_string(r.quality)),
                      opt_str(r.latitude), opt_str(r.longitude), r.country, r.license, r.source_url,
                      csv::fmt_double(r.duration_s, 10)});
  }
  csv::write(path, t);
}

std::vector<RecordingMeta> read_metadata_csv(const fs::path& path) {
  const csv::Table t = csv::read(path);
  std::vector<RecordingMeta> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RecordingMeta r;
    r.catalog_id = std::stoll(t.at(i, "catalog_id"));
    r.species = t.at(i, "species");
    r.english_name = t.at(i, "english_name");
    r.quality = parse_quality(t.at(i, "quality"));
    r.latitude = opt_parse(t.at(i, "lat"));
    r.longitude = opt_parse(t.at(i, "lon"));
    r.country = t.at(i, "country");
    r.license = t.at(i, "license");
    r.source_url = t.at(i, "source_url");
    r.duration_s = std::stod(t.at(i, "duration_s"));
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ClipRecord>& clips) {
  csv::Table t;
  t.header = kManifestHeader;
  for (const auto& c : clips) {
    t.rows.push_back({c.clip_id, std::to_string(c.label), c.source,
                      c.catalog_id > 0 ? std::to_string(c.catalog_id) : std::string{}, c.species, c.country,
                      opt_str(c.latitude), opt_str(c.longitude), c.quality, csv::fmt_double(c.start_s, 10),
                      csv::fmt_double(c.salience, 10), c.cluster_id >= 0 ? std::to_string(c.cluster_id) : std::string{},
                      c.split, c.license, c.source_file, c.path});
  }
  csv::write(path, t);
}

std::vector<ClipRecord> read_manifest(const fs::path& path) {
  const csv::Table t = csv::read(path);
  std::vector<ClipRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    ClipRecord c;
    c.clip_id = t.at(i, "clip_id");
    c.label = std::stoi(t.at(i, "label"));
    c.source = t.at(i, "source");
    const std::string& id = t.at(i, "catalog_id");
    c.catalog_id = id.empty() ? 0 : std::stoll(id);
    c.species = t.at(i, "species");
    c.country = t.at(i, "country");
    c.latitude = opt_parse(t.at(i, "lat"));
    c.longitude = opt_parse(t.at(i, "lon"));
    c.quality = t.at(i, "quality");
    c.start_s = std::stod(t.at(i, "start_s"));
    c.salience = std::stod(t.at(i, "salience"));
    const std::string& cl = t.at(i, "cluster_id");
    c.cluster_id = cl.empty() ? -1 : std::stoi(cl);
    c.split = t.at(i, "split");
    c.license = t.at(i, "license");
    if (t.column("source_file") >= 0) c.source_file = t.at(i, "source_file");
    if (t.column("path") >= 0) c.path = t.at(i, "path");
    out.push_back(std::move(c));
  }
  return out;
}

std::string recording_group(const ClipRecord& c) {
  if (c.catalog_id > 0) return c.source + ":" + std::to_string(c.catalog_id);
  return c.source + ":" + (c.source_file.empty() ? c.clip_id : c.source_file);
}

std::vector<SplitAssignment> make_splits(const std::vector<ClipRecord>& clips, const SplitRatios& ratios,
                                         std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidProportion, "split ratios must be non-negative and sum to 1");
  }
  static const char* kNames[] = {"train", "val", "test"};

  std::map<int, std::map<std::string, std::vector<std::size_t>>> strata;
  for (std::size_t i = 0; i < clips.size(); ++i) strata[clips[i].label][recording_group(clips[i])].push_back(i);

  std::vector<SplitAssignment> out;
  out.reserve(clips.size());
  for (auto& [label, groups] : strata) {
    std::vector<std::vector<std::size_t>*> order;
    std::size_t n = 0;
    for (auto& [_, members] : groups) {
      order.push_back(&members);
      n += members.size();
    }
    Rng rng = make_rng(seed, "split/" + std::to_string(label));
    shuffle(order, rng);
    std::stable_sort(order.begin(), order.end(), [](auto a, auto b) { return a->size() > b->size(); });

    const auto n_val = static_cast<long long>(std::llround(static_cast<double>(n) * ratios.val));
    const auto n_test = static_cast<long long>(std::llround(static_cast<double>(n) * ratios.test));
    long long deficit[3] = {static_cast<long long>(n) - n_val - n_test, n_val, n_test};
    for (const auto* members : order) {
      const int pick = static_cast<int>(std::max_element(deficit, deficit + 3) - deficit);
      deficit[pick] -= static_cast<long long>(members->size());
      for (auto i : *members) out.push_back({clips[i].clip_id, kNames[pick]});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  return out;
}

}  // namespace avicurate
