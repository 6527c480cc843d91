#pragma once

#include <string>

namespace avicurate {

struct RetryPolicy {
  int max_attempts = 5;
  double initial_backoff_s = 1.0;
  double max_backoff_s = 30.0;
  double timeout_s = 60.0;
};

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string target;  // path plus query
};

// Accepts http, https and protocol-relative ("//host/...") URLs.
UrlParts split_url(const std::string& url);

std::string url_encode(const std::string& s);

// GET with redirects followed. 429 and 5xx responses and transport errors
// are retried with exponential backoff (Retry-After honoured up to
// max_backoff_s); other non-200 statuses fail at once. Throws
// NetworkFailure when it gives up. file:// URLs are read from disk, which is
// how recorded fixtures stand in for the network.
std::string http_get(const std::string& url, const RetryPolicy& policy = {}, int* attempts = nullptr);

}  // namespace avicurate
