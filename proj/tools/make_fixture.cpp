// Writes the offline mini corpus into a directory:
//   <dir>/audio       recordings the catalog pages point at (file:// URLs)
//   <dir>/pages       recorded catalog pages
//   <dir>/negatives   bird-absent clips in the six source layouts
//   <dir>/config.json run config replaying all of the above
// so `avicurate --config <dir>/config.json run-all` needs no network.

#include <CLI11.hpp>

#include <iostream>

#include "avicurate/fs_util.hpp"
#include "mini_corpus.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Generate the offline end-to-end fixture"};
  std::string out = "fixture";
  std::uint64_t seed = 7;
  app.add_option("dir", out, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "Corpus seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path root = fs::absolute(out);
    fs::create_directories(root);
    const auto corpus = fixtures::write_mini_corpus(root, "file://" + (root / "audio").string(), seed);
    fixtures::write_mini_pages(root / "pages", corpus);
    // Endpoint and negatives root are written relative to the config file.
    auto doc = avicurate::config_to_json(fixtures::mini_config(corpus, "file://pages", root / "negatives"));
    doc["negatives"]["root"] = "negatives";
    doc["catalog"]["endpoint"] = "file://pages";
    avicurate::write_text_atomic(root / "config.json", doc.dump(2) + "\n");
    std::cout << corpus.records.size() << " catalog records, " << corpus.n_negative_files
              << " negative files written to " << root.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
