// Command-line front end: one subcommand per pipeline stage plus the audit
// server, Gini calculator and dataset report.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "avicurate/audit_server.hpp"
#include "avicurate/csv.hpp"
#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"
#include "avicurate/pipeline.hpp"

using namespace avicurate;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string workspace = "workspace";
  bool force = false;
  int jobs = 0;
};

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigInvalid: return 3;
    case ErrorCode::MissingDependency: return 4;
    case ErrorCode::EmptyWorkspace: return 5;
    case ErrorCode::NetworkFailure:
    case ErrorCode::MalformedResponse: return 6;
    default: return 1;
  }
}

RunConfig resolve_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? paper_profile() : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (g.jobs > 0) c.jobs = g.jobs;
  validate(c);
  return c;
}

void print_report(const StageReport& r) {
  std::cout << json{{"stage", r.stage}, {"status", r.status}, {"seconds", r.seconds}, {"details", r.details}}.dump(2)
            << "\n";
}

// Species counts from a manifest (label 1 rows) or from a table with
// species and count columns.
std::map<std::string, std::size_t> species_counts(const fs::path& path) {
  const csv::Table t = csv::read(path);
  std::map<std::string, std::size_t> counts;
  const bool tallied = t.column("count") >= 0;
  const bool labelled = t.column("label") >= 0;
  if (t.column("species") < 0) throw Error(ErrorCode::InvalidArgument, path.string() + " has no species column");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (labelled && t.at(i, "label") != "1") continue;
    counts[t.at(i, "species")] += tallied ? std::stoull(t.at(i, "count")) : 1;
  }
  return counts;
}

AuditServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bird-audio dataset curation: catalog ingest, deduplication, clip extraction, species balancing, "
               "negative curation and audit."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Run config JSON (default: built-in defaults)");
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--workspace", g.workspace, "Workspace directory")->capture_default_str();
  app.add_flag("--force", g.force, "Re-run stages even when their inputs are unchanged");
  app.add_option("--jobs", g.jobs, "Worker threads for per-file stages")->check(CLI::PositiveNumber);

  std::string endpoint, countries;
  bool offline = false;
  auto* fetch = app.add_subcommand("fetch-metadata", "Page through the catalog API and filter the records");
  fetch->add_option("--endpoint", endpoint, "Catalog API endpoint, or file://<dir> of recorded pages");
  fetch->add_option("--countries", countries, "Comma-separated country list");
  fetch->add_flag("--offline", offline, "Use cached pages only");

  app.add_subcommand("download", "Download recordings and convert them to 16 kHz mono FLAC");
  app.add_subcommand("dedup", "Drop acoustically identical re-uploads");
  app.add_subcommand("extract", "Cut 3 s clips at the loudest well-separated windows");
  app.add_subcommand("balance", "Species balancing with per-species clustering");
  std::string negatives_root;
  auto* neg = app.add_subcommand("curate-negatives", "Gate and allocate bird-absent clips from the six sources");
  neg->add_option("--negatives-root", negatives_root, "Directory holding one folder per negative source");
  app.add_subcommand("merge", "Combine positives and negatives into one class-balanced set");
  app.add_subcommand("split", "Assign train/val/test splits grouped by source recording");
  auto* all = app.add_subcommand("run-all", "Run every stage in dependency order");

  std::string gini_file;
  auto* gini_cmd = app.add_subcommand("gini", "Gini coefficient of per-species clip counts");
  gini_cmd->add_option("file", gini_file, "Manifest CSV or species,count table (default: workspace manifest)");

  int round = 0;
  bool grids = false;
  auto* sample = app.add_subcommand("audit-sample", "Draw a Cochran-sized audit sample");
  sample->add_option("--round", round, "Audit round (default: next)");
  sample->add_flag("--grids", grids, "Also write 5x5 spectrogram grid pages");

  std::string host;
  int port = -1;
  auto* serve = app.add_subcommand("audit-serve", "Serve an audit round over HTTP");
  serve->add_option("--round", round, "Audit round (default: latest)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");

  auto* report = app.add_subcommand("report", "Dataset statistics for the workspace");
  auto* show = app.add_subcommand("show-config", "Print the resolved run config");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(g);
    if (fetch->parsed()) {
      if (!endpoint.empty()) cfg.catalog.endpoint = endpoint;
      if (offline) cfg.catalog.offline = true;
      if (!countries.empty()) {
        cfg.catalog.countries.clear();
        std::stringstream ss(countries);
        for (std::string c; std::getline(ss, c, ',');) {
          if (!c.empty()) cfg.catalog.countries.push_back(c);
        }
      }
    }
    if (neg->parsed() && !negatives_root.empty()) {
      // Re-root every source under the new directory, keeping its folder name.
      for (auto& s : cfg.negatives.sources) s.root = fs::path(negatives_root) / s.root.filename();
      cfg.negatives.root = negatives_root;
    }
    validate(cfg);

    if (show->parsed()) {
      std::cout << config_to_json(cfg).dump(2) << "\n";
      return 0;
    }

    RunOptions opts;
    opts.force = g.force;
    opts.jobs = g.jobs;
    opts.audit_round = round;
    opts.audit_grids = grids;

    if (gini_cmd->parsed()) {
      const fs::path file = gini_file.empty() ? fs::path(g.workspace) / "dataset/manifest.csv" : fs::path(gini_file);
      const auto counts = species_counts(file);
      std::size_t total = 0;
      for (const auto& [_, n] : counts) total += n;
      std::cout << json{{"gini", gini(counts)}, {"species", counts.size()}, {"clips", total}}.dump(2) << "\n";
      return 0;
    }

    Workspace ws(g.workspace, cfg);
    if (report->parsed()) {
      const json r = ws.report();
      write_text_atomic(fs::path(g.workspace) / "reports/summary.json", r.dump(2) + "\n");
      std::cout << r.dump(2) << "\n";
      return 0;
    }
    if (all->parsed()) {
      for (const auto& r : ws.run_all(opts)) print_report(r);
      return 0;
    }
    if (serve->parsed()) {
      auto session = ws.open_audit(round);
      AuditServerOptions so;
      so.host = host.empty() ? cfg.audit.host : host;
      so.port = port >= 0 ? port : cfg.audit.port;
      if (const char* tok = std::getenv(cfg.audit.token_env.c_str()); tok && *tok) so.token = tok;
      AuditServer server(*session, so);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "audit round " << session->plan().round << ": " << session->judged() << "/"
                << session->plan().sampled_clip_ids.size() << " judged, serving on " << so.host << ":"
                << (so.port ? std::to_string(so.port) : std::string("<auto>")) << "\n";
      server.run();
      g_server = nullptr;
      return 0;
    }
    for (auto* sub : app.get_subcommands()) {
      print_report(ws.run(sub->get_name(), opts));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
