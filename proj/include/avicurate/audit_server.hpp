#pragma once

#include <memory>
#include <optional>
#include <string>

#include "avicurate/audit.hpp"

namespace avicurate {

struct AuditServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;                      // 0 picks a free port
  std::optional<std::string> token;  // shared secret; Bearer header or ?token=
  int tile_width = 768;
  int tile_height = 432;
};

// JSON/PNG/WAV front end over an AuditSession, for the review UI.
//
//   GET  /api/plan
//   GET  /api/clips/next?auditor=NAME
//   GET  /api/clips/{id}/spectrogram.png
//   GET  /api/clips/{id}/source-spectrogram.png
//   GET  /api/clips/{id}/audio.wav
//   POST /api/verdicts
//   GET  /api/summary
//   GET  /api/grid/{page}.png
class AuditServer {
 public:
  AuditServer(AuditSession& session, AuditServerOptions options = {});
  ~AuditServer();
  AuditServer(const AuditServer&) = delete;
  AuditServer& operator=(const AuditServer&) = delete;

  // Binds and serves on a background thread. Returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop() is called.
  void run();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace avicurate
