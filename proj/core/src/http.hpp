#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cspeech::detail {

struct Url {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // e.g. "/v1", without trailing slash
};

/// Throws InvalidArgument when the URL has no http/https scheme or host.
Url parse_url(std::string_view url);

enum class HttpFailure { kNone, kConnection, kTimeout, kOther };

struct HttpResponse {
  int status = 0;
  std::string body;
  HttpFailure failure = HttpFailure::kNone;
  std::string error_message;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// One blocking request; never throws for transport problems.
HttpResponse http_request(std::string_view method, const Url& base, std::string_view path,
                          const std::string& body, const Headers& headers,
                          std::chrono::milliseconds timeout);

}  // namespace cspeech::detail
