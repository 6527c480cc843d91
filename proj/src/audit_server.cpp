#include "avicurate/audit_server.hpp"

#include <httplib.h>
#include <json.hpp>

#include <thread>

#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"

namespace avicurate {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownClip:
    case ErrorCode::MissingClip:
      return 404;
    case ErrorCode::DuplicateVerdict:
    case ErrorCode::IncompleteRound:
      return 409;
    case ErrorCode::InvalidVerdict:
    case ErrorCode::InvalidArgument:
      return 400;
    default:
      return 500;
  }
}

json summary_json(const AuditSummary& s) {
  json j{{"rounds", s.rounds},     {"population", s.population}, {"n", s.n},
         {"correct", s.correct},   {"accuracy", s.accuracy},     {"error_rate", s.error_rate},
         {"margin", s.margin},     {"z", s.z},                   {"by_outcome", s.by_outcome}};
  if (!s.caveat.empty()) j["caveat"] = s.caveat;
  return j;
}

json remediation_json(const Remediation& r) {
  json j{{"action", r.action}, {"clip_id", r.clip_id}, {"old_start_s", r.old_start_s}, {"new_start_s", r.new_start_s}};
  if (!r.new_clip_id.empty()) j["new_clip_id"] = r.new_clip_id;
  return j;
}

}  // namespace

struct AuditServer::Impl {
  AuditSession& session;
  AuditServerOptions options;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  Impl(AuditSession& s, AuditServerOptions o) : session(s), options(std::move(o)) { routes(); }

  bool authorised(const httplib::Request& req) const {
    if (!options.token) return true;
    if (req.get_param_value("token") == *options.token) return true;
    return req.get_header_value("Authorization") == "Bearer " + *options.token;
  }

  // Wraps a handler with the token check and Error -> status mapping.
  httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
    return [this, fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      if (!authorised(req)) return send_error(res, 401, "unauthorized", "missing or wrong token");
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), std::string(to_string(e.code())), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  AuditClip require_clip(const std::string& id) const {
    const auto c = session.clip(id);
    if (!c) throw Error(ErrorCode::UnknownClip, "no clip " + id);
    return *c;
  }

  void routes() {
    server.Get("/api/plan", guarded([this](const httplib::Request&, httplib::Response& res) {
      const AuditPlan& p = session.plan();
      send_json(res, 200, {{"round", p.round}, {"p_hat", p.p_hat}, {"margin", p.margin}, {"z", p.z},
                           {"population", p.population}, {"n0", p.n0}, {"n_star", p.n_star},
                           {"sample_size", p.sampled_clip_ids.size()}, {"judged", session.judged()},
                           {"clip_ids", p.sampled_clip_ids}});
    }));

    server.Get("/api/clips/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string auditor = req.get_param_value("auditor");
      if (auditor.empty()) return send_error(res, 400, "invalid_argument", "auditor is required");
      const auto id = session.next_for(auditor);
      if (!id) return send_json(res, 200, {{"clip_id", nullptr}, {"remaining", 0}});
      json j{{"clip_id", *id},
             {"remaining", session.plan().sampled_clip_ids.size() - session.judged()}};
      if (const auto c = session.clip(*id)) {
        j["catalog_id"] = c->catalog_id;
        j["start_s"] = c->start_s;
      }
      send_json(res, 200, j);
    }));

    server.Get(R"(/api/clips/([^/]+)/spectrogram\.png)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const AuditClip c = require_clip(req.matches[1]);
                 const ClipBuffer buf = load_clip(c.clip_path);
                 res.set_content(encode_png(clip_spectrogram(buf, options.tile_width, options.tile_height)),
                                 "image/png");
               }));

    server.Get(R"(/api/clips/([^/]+)/source-spectrogram\.png)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const AuditClip c = require_clip(req.matches[1]);
                 const ClipBuffer buf = load_clip(c.source_path);
                 // Wider tile so a long recording keeps some time resolution.
                 res.set_content(encode_png(clip_spectrogram(buf, 2 * options.tile_width, options.tile_height)),
                                 "image/png");
               }));

    server.Get(R"(/api/clips/([^/]+)/audio\.wav)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const AuditClip c = require_clip(req.matches[1]);
                 std::string bytes;
                 try {
                   bytes = read_text(c.clip_path);
                 } catch (const Error&) {
                   throw Error(ErrorCode::MissingClip, "clip file missing for " + c.clip_id);
                 }
                 res.set_content(std::move(bytes), "audio/wav");
               }));

    server.Post("/api/verdicts", guarded([this](const httplib::Request& req, httplib::Response& res) {
      AuditVerdict v;
      try {
        const json j = json::parse(req.body);
        v.clip_id = j.at("clip_id").get<std::string>();
        v.outcome = parse_outcome(j.at("outcome").get<std::string>());
        if (j.contains("corrected_start_s") && !j["corrected_start_s"].is_null()) {
          v.corrected_start_s = j["corrected_start_s"].get<double>();
        }
        v.auditor = j.value("auditor", std::string{});
        v.round = j.value("round", session.plan().round);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidVerdict, std::string("malformed verdict: ") + e.what());
      }
      if (v.auditor.empty()) throw Error(ErrorCode::InvalidVerdict, "auditor is required");
      const Remediation r = session.record(std::move(v));
      send_json(res, 201, {{"recorded", true}, {"judged", session.judged()}, {"remediation", remediation_json(r)}});
    }));

    server.Get("/api/summary", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, summary_json(session.summary()));
    }));

    server.Get(R"(/api/grid/(\d+)\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t page = std::stoul(req.matches[1]);
      const Image img = render_grid(session.plan().sampled_clip_ids, page, [this](const std::string& id) {
        const auto c = session.clip(id);
        if (!c) throw Error(ErrorCode::MissingClip, "clip " + id + " was removed");
        return load_clip(c->clip_path);
      });
      res.set_content(encode_png(img), "image/png");
    }));
  }

  static ClipBuffer load_clip(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw Error(ErrorCode::MissingClip, "missing audio " + p.string());
    return decode_and_resample(p);
  }

  void bind() {
    if (options.port == 0) {
      port = server.bind_to_any_port(options.host);
    } else {
      port = server.bind_to_port(options.host, options.port) ? options.port : -1;
    }
    if (port <= 0) throw Error(ErrorCode::NetworkFailure, "cannot bind " + options.host + ":" + std::to_string(options.port));
  }
};

AuditServer::AuditServer(AuditSession& session, AuditServerOptions options)
    : impl_(std::make_unique<Impl>(session, std::move(options))) {}

AuditServer::~AuditServer() { stop(); }

int AuditServer::start() {
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void AuditServer::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void AuditServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int AuditServer::port() const { return impl_->port; }

}  // namespace avicurate
