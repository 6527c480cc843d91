#include "avicurate/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <thread>

#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"

namespace avicurate {

UrlParts split_url(const std::string& url) {
  std::string u = url;
  if (u.rfind("//", 0) == 0) u = "https:" + u;
  const auto scheme_end = u.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "not an absolute URL: " + url);
  const auto path_start = u.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {u, "/"};
  return {u.substr(0, path_start), u.substr(path_start)};
}

std::string url_encode(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

std::string http_get(const std::string& url, const RetryPolicy& policy, int* attempts) {
  if (url.rfind("file://", 0) == 0) {
    if (attempts) *attempts = 1;
    try {
      return read_text(url.substr(7));
    } catch (const Error& e) {
      throw Error(ErrorCode::NetworkFailure, e.what());
    }
  }
  const UrlParts parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_follow_location(true);
  const auto timeout = std::chrono::duration<double>(policy.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  const httplib::Headers headers{{"User-Agent", "avicurate/0.1"}};

  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    if (attempts) *attempts = attempt;
    double wait = std::min(policy.max_backoff_s, policy.initial_backoff_s * std::pow(2.0, attempt - 1));
    auto res = client.Get(parts.target, headers);
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else if (res->status == 200) {
      return std::move(res->body);
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        try {
          wait = std::min(policy.max_backoff_s, std::stod(res->get_header_value("Retry-After")));
        } catch (const std::exception&) {
          // HTTP-date form; keep the computed backoff.
        }
      }
    } else {
      throw Error(ErrorCode::NetworkFailure, "HTTP " + std::to_string(res->status) + " for " + url);
    }
    if (attempt < policy.max_attempts) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  }
  throw Error(ErrorCode::NetworkFailure,
              "giving up on " + url + " after " + std::to_string(policy.max_attempts) + " attempts: " + last_error);
}

}  // namespace avicurate
