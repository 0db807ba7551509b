#include "http.hpp"

#include <httplib.h>

#include "cspeech/error.hpp"

namespace cspeech::detail {

Url parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw InvalidArgument("URL has no scheme: '" + std::string(url) + "'");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw InvalidArgument("unsupported URL scheme: '" + std::string(url) + "'");
  }
  const auto rest = url.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  const auto host = rest.substr(0, slash);
  if (host.empty()) throw InvalidArgument("URL has no host: '" + std::string(url) + "'");
  Url out;
  out.origin = std::string(scheme) + "://" + std::string(host);
  if (slash != std::string_view::npos) {
    out.path_prefix = std::string(rest.substr(slash));
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

HttpResponse http_request(std::string_view method, const Url& base, std::string_view path,
                          const std::string& body, const Headers& headers,
                          std::chrono::milliseconds timeout) {
  HttpResponse out;
  try {
    httplib::Client client(base.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    const std::string full_path = base.path_prefix + std::string(path);

    const auto started = std::chrono::steady_clock::now();
    httplib::Result res = method == "GET"
                              ? client.Get(full_path, h)
                              : client.Post(full_path, h, body, "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - started;

    if (!res) {
      const auto err = res.error();
      out.error_message = httplib::to_string(err);
      if (err == httplib::Error::ConnectionTimeout ||
          (err == httplib::Error::Read && elapsed >= timeout * 9 / 10)) {
        out.failure = HttpFailure::kTimeout;
      } else if (err == httplib::Error::Connection || err == httplib::Error::Read ||
                 err == httplib::Error::Write || err == httplib::Error::SSLConnection) {
        out.failure = HttpFailure::kConnection;
      } else {
        out.failure = HttpFailure::kOther;
      }
      return out;
    }
    out.status = res->status;
    out.body = res->body;
  } catch (const std::exception& e) {
    out.failure = HttpFailure::kOther;
    out.error_message = e.what();
  }
  return out;
}

}  // namespace cspeech::detail
