#include "fixtures.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cstdio>

#include "avicurate/csv.hpp"
#include "avicurate/fs_util.hpp"
#include "synth.hpp"

namespace fixtures {

using avicurate::ClipBuffer;

const std::vector<std::string> kEsc50Classes{
    "dog",          "rooster",        "pig",          "cow",          "frog",           "cat",
    "hen",          "insects",        "sheep",        "crow",         "rain",           "sea_waves",
    "crackling_fire", "crickets",     "chirping_birds", "water_drops", "wind",          "pouring_water",
    "toilet_flush", "thunderstorm",   "crying_baby",  "sneezing",     "clapping",       "breathing",
    "coughing",     "footsteps",      "laughing",     "brushing_teeth", "snoring",      "drinking_sipping",
    "door_wood_knock", "mouse_click", "keyboard_typing", "door_wood_creaks", "can_opening", "washing_machine",
    "vacuum_cleaner", "clock_alarm",  "clock_tick",   "glass_breaking", "helicopter",   "chainsaw",
    "siren",        "car_horn",       "engine",       "train",        "church_bells",   "airplane",
    "fireworks",    "hand_saw"};

const std::vector<std::string> kFsc22Classes{
    "Fire",     "Rain",     "Thunderstorm", "WaterDrops", "Wind",      "Silence",   "TreeFalling",
    "Helicopter", "VehicleEngine", "Axe",   "Chainsaw",   "Generator", "Handsaw",   "Firework",
    "Gunshot",  "WoodChop", "Whistling",    "Speaking",   "Footsteps", "Clapping",  "Insect",
    "Frog",     "BirdChirping", "WingFlapping", "Lion",   "WolfHowl",  "Squirrel"};

namespace {

void write_noise(const fs::path& path, double seconds, int rate, double target_rms, std::uint64_t seed) {
  ClipBuffer b = synth::pink_noise(seconds, target_rms, seed, rate);
  avicurate::write_wav(b, path);
}

}  // namespace

void write_mock_dcase(const fs::path& root, const std::string& csv_name, std::size_t n_negative,
                      std::size_t n_positive, const AudioStyle& style, std::uint64_t seed) {
  fs::create_directories(root / "wav");
  avicurate::csv::Table t;
  t.header = {"itemid", "datasetid", "hasbird"};
  std::vector<int> labels(n_negative, 0);
  labels.resize(n_negative + n_positive, 1);
  auto rng = avicurate::make_rng(seed, "dcase-labels");
  avicurate::shuffle(labels, rng);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%04llx-%05zu", static_cast<unsigned long long>(seed & 0xffff), i);
    t.rows.push_back({id, root.filename().string(), std::to_string(labels[i])});
    write_noise(root / "wav" / (std::string(id) + ".wav"), style.seconds, style.sample_rate, style.rms, seed * 1000 + i);
  }
  avicurate::csv::write(root / csv_name, t);
}

void write_mock_esc50(const fs::path& root, std::size_t per_class, const AudioStyle& style, std::uint64_t seed) {
  fs::create_directories(root / "meta");
  fs::create_directories(root / "audio");
  avicurate::csv::Table t;
  t.header = {"filename", "fold", "target", "category", "esc10", "src_file", "take"};
  std::size_t serial = 0;
  for (std::size_t c = 0; c < kEsc50Classes.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++serial) {
      const std::string fold = std::to_string(1 + k % 5);
      const std::string src = std::to_string(100000 + serial);
      const std::string name = fold + "-" + src + "-A-" + std::to_string(c) + ".wav";
      t.rows.push_back({name, fold, std::to_string(c), kEsc50Classes[c], "False", src, "A"});
      write_noise(root / "audio" / name, style.seconds, style.sample_rate, style.rms, seed * 100000 + serial);
    }
  }
  avicurate::csv::write(root / "meta" / "esc50.csv", t);
}

void write_mock_fsc22(const fs::path& root, std::size_t per_class, const AudioStyle& style, std::uint64_t seed) {
  const fs::path audio = root / "Audio Wise V1.0";
  fs::create_directories(audio);
  fs::create_directories(root / "Metadata");
  avicurate::csv::Table t;
  t.header = {"Source File Name", "Dataset File Name", "Class ID", "Class Name"};
  std::size_t serial = 0;
  for (std::size_t c = 0; c < kFsc22Classes.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++serial) {
      const std::string name = std::to_string(c + 1) + "_" + std::to_string(10000 + serial) + ".wav";
      t.rows.push_back({"src_" + std::to_string(serial) + ".wav", name, std::to_string(c + 1), kFsc22Classes[c]});
      write_noise(audio / name, style.seconds, style.sample_rate, style.rms, seed * 100000 + serial);
    }
  }
  avicurate::csv::write(root / "Metadata" / "Metadata V1.0 FSC22.csv", t);
}

void write_mock_datasec(const fs::path& root, const std::map<std::string, std::size_t>& per_category,
                        int sample_rate, std::uint64_t seed) {
  static const double kDurations[] = {1.5, 2.0, 3.0, 4.5, 6.0, 8.0};
  std::size_t serial = 0;
  for (const auto& [category, count] : per_category) {
    fs::create_directories(root / category);
    for (std::size_t k = 0; k < count; ++k, ++serial) {
      const double secs = kDurations[serial % std::size(kDurations)];
      ClipBuffer b = synth::pink_noise(secs, 0.05, seed * 100000 + serial, sample_rate);
      // A louder event somewhere in the longer files gives the window search a target.
      if (secs > 3.0) synth::add_burst(b, secs * 0.6, 0.8, 900.0 + 50.0 * (serial % 7), 0.3);
      avicurate::write_wav(b, root / category / (category + "_" + std::to_string(k) + ".wav"));
    }
  }
}

MockNegatives write_mock_negative_sources(const fs::path& root, std::size_t per_source, std::uint64_t seed) {
  MockNegatives m;
  m.specs = avicurate::paper_negative_sources(root);
  const AudioStyle dcase{10.0, 8000, 0.08};
  const AudioStyle short_style{5.0, 8000, 0.08};
  write_mock_dcase(root / "birdvox", "BirdVoxDCASE20k_csvpublic.csv", per_source, per_source / 2, dcase, seed + 1);
  write_mock_dcase(root / "freefield1010", "ff1010bird_metadata_2018.csv", per_source, per_source / 2, dcase,
                   seed + 2);
  write_mock_dcase(root / "warblr", "warblrb10k_public_metadata_2018.csv", per_source, per_source / 2, dcase,
                   seed + 3);
  // One file per class; the exclusions leave 46 and 25 of them.
  write_mock_esc50(root / "esc50", 1, short_style, seed + 4);
  write_mock_fsc22(root / "fsc22", 1, short_style, seed + 5);
  std::map<std::string, std::size_t> datasec{{"Aircraft", 0}, {"Birds", 3}, {"Chicken coop", 2}, {"Crows seagulls and magpies", 2},
                                             {"Dogs", 0},     {"Music", 4}, {"Thunder", 0},      {"Vehicles", 0}, {"Voices", 0}};
  const std::size_t per_cat = std::max<std::size_t>(1, per_source / 5);
  for (const char* c : {"Aircraft", "Dogs", "Thunder", "Vehicles", "Voices"}) datasec[c] = per_cat;
  datasec["Voices"] = per_cat * 2;
  write_mock_datasec(root / "datasec", datasec, 8000, seed + 6);

  // Quotas leave some slack so gate attrition cannot starve a source.
  const std::size_t quotas[] = {per_source * 4 / 5, per_source * 4 / 5, per_source * 4 / 5, 20, 40, per_cat * 4};
  for (std::size_t i = 0; i < m.specs.size(); ++i) {
    m.specs[i].quota = quotas[i];
    m.total_quota += quotas[i];
  }
  return m;
}


std::string catalog_page_json(const std::vector<avicurate::RecordingMeta>& records, int page, int num_pages) {
  nlohmann::json doc;
  doc["numRecordings"] = std::to_string(records.size());
  doc["page"] = page;
  doc["numPages"] = num_pages;
  doc["recordings"] = nlohmann::json::array();
  for (const auto& r : records) {
    const auto space = r.species.find(' ');
    const int secs = static_cast<int>(std::lround(r.duration_s));
    char length[16];
    std::snprintf(length, sizeof length, "%d:%02d", secs / 60, secs % 60);
    doc["recordings"].push_back({
        {"id", std::to_string(r.catalog_id)},
        {"gen", r.species.substr(0, space)},
        {"sp", space == std::string::npos ? "" : r.species.substr(space + 1)},
        {"en", r.english_name},
        {"cnt", r.country},
        {"lat", r.latitude ? avicurate::csv::fmt_double(*r.latitude, 8) : ""},
        {"lon", r.longitude ? avicurate::csv::fmt_double(*r.longitude, 8) : ""},
        {"q", r.quality == avicurate::Quality::Unrated ? "no score" : std::string(avicurate::to_string(r.quality))},
        {"length", length},
        {"file", r.source_url},
        {"lic", r.license},
    });
  }
  return doc.dump();
}

struct MockCatalogServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mu;
  std::map<std::string, std::vector<std::string>> pages;
  fs::path audio_dir;
  int failures_left = 0;
  int failure_status = 503;
};

MockCatalogServer::MockCatalogServer() : impl_(std::make_unique<Impl>()) {
  Impl& im = *impl_;
  im.server.Get("/api/3/recordings", [this](const httplib::Request& req, httplib::Response& res) {
    ++api_requests_;
    std::lock_guard lock(impl_->mu);
    if (impl_->failures_left > 0) {
      --impl_->failures_left;
      res.status = impl_->failure_status;
      res.set_header("Retry-After", "0");
      return;
    }
    const std::string q = req.get_param_value("query");
    const auto at = q.find("cnt:\"");
    const std::string country = at == std::string::npos ? "" : q.substr(at + 5, q.find('"', at + 5) - at - 5);
    const int page = req.has_param("page") ? std::stoi(req.get_param_value("page")) : 1;
    const auto it = impl_->pages.find(country);
    if (it == impl_->pages.end()) {
      res.set_content(catalog_page_json({}, 1, 1), "application/json");
      return;
    }
    if (page < 1 || page > static_cast<int>(it->second.size())) {
      res.status = 404;
      return;
    }
    res.set_content(it->second[page - 1], "application/json");
  });
  im.server.Get(R"(/audio/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    fs::path file;
    {
      std::lock_guard lock(impl_->mu);
      file = impl_->audio_dir / req.matches[1].str();
    }
    if (impl_->audio_dir.empty() || !fs::is_regular_file(file)) {
      res.status = 404;
      return;
    }
    res.set_content(avicurate::read_text(file), "audio/mpeg");
  });
  im.port = im.server.bind_to_any_port("127.0.0.1");
  im.thread = std::thread([&im] { im.server.listen_after_bind(); });
  im.server.wait_until_ready();
}

MockCatalogServer::~MockCatalogServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockCatalogServer::set_pages(const std::string& country, std::vector<std::string> pages) {
  std::lock_guard lock(impl_->mu);
  impl_->pages[country] = std::move(pages);
}

void MockCatalogServer::set_records(const std::string& country, const std::vector<avicurate::RecordingMeta>& records,
                                    std::size_t per_page) {
  std::vector<std::string> pages;
  const std::size_t n_pages = std::max<std::size_t>(1, (records.size() + per_page - 1) / per_page);
  for (std::size_t p = 0; p < n_pages; ++p) {
    const auto first = records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), p * per_page));
    const auto last = records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), (p + 1) * per_page));
    pages.push_back(catalog_page_json({first, last}, static_cast<int>(p + 1), static_cast<int>(n_pages)));
  }
  set_pages(country, std::move(pages));
}

void MockCatalogServer::serve_audio_from(const fs::path& dir) {
  std::lock_guard lock(impl_->mu);
  impl_->audio_dir = dir;
}

void MockCatalogServer::fail_next(int n, int status) {
  std::lock_guard lock(impl_->mu);
  impl_->failures_left = n;
  impl_->failure_status = status;
}

std::string MockCatalogServer::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port) + "/api/3/recordings";
}

std::string MockCatalogServer::audio_base() const { return "http://127.0.0.1:" + std::to_string(impl_->port) + "/audio"; }

}  // namespace fixtures
