#pragma once

#include "mmsr/http.hpp"

#include <memory>
#include <sstream>
#include <string>
#include <thread>

#include "mmsr/service.hpp"

namespace mmsr::testing {

/// A Service on an ephemeral loopback port, served from a background thread.
struct RunningService {
  std::ostringstream log;
  std::unique_ptr<service::Service> svc;
  std::thread th;
  int port = -1;

  explicit RunningService(service::ServiceConfig cfg) {
    cfg.bind = "127.0.0.1";
    cfg.port = 0;
    svc = std::make_unique<service::Service>(std::move(cfg), &log);
    port = svc->bind();
    th = std::thread([this] { svc->serve(); });
    svc->wait_until_ready();
  }
  ~RunningService() {
    svc->stop();
    if (th.joinable()) th.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }
};

inline httplib::Result post_image(httplib::Client& c, const std::string& path, const std::string& image, const std::string& content_type = "image/png") {
  return c.Post(path, image, content_type);
}

inline httplib::Result post_multipart(httplib::Client& c, const std::string& path, const std::string& image,
                                      const std::vector<std::pair<std::string, std::string>>& fields = {}) {
  httplib::MultipartFormDataItems items{{"image", image, "in.png", "image/png"}};
  for (const auto& [k, v] : fields) items.push_back({k, v, "", ""});
  return c.Post(path, items);
}

}  // namespace mmsr::testing
