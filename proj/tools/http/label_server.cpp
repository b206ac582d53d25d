#include "label_server.hpp"

#include <httplib.h>
#include <json.hpp>

#include <sstream>

namespace recon {

using nlohmann::json;

struct LabelServer::Impl {
  StudyService& service;
  ServerOptions options;
  httplib::Server server;

  Impl(StudyService& s, ServerOptions o) : service(s), options(std::move(o)) {}
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const SessionNotFound& e) {
    reply_error(res, 404, e.what());
  } catch (const CursorConflict& e) {
    reply_error(res, 409, e.what());
  } catch (const InvalidLabel& e) {
    reply_error(res, 400, e.what());
  } catch (const PretestFailed& e) {
    reply_error(res, 412, e.what());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    reply_error(res, what.rfind("unknown domain", 0) == 0 ? 404 : 400, what);
  } catch (const json::exception& e) {
    reply_error(res, 400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, e.what());
  }
}

}  // namespace

LabelServer::LabelServer(StudyService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  Impl& im = *impl_;
  im.server.set_default_headers({
      {"Access-Control-Allow-Origin", im.options.allowed_origin},
      {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
      {"Access-Control-Allow-Headers", "Content-Type"},
  });

  im.server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  im.server.Get("/pretest", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(pretest_json(), "application/json");
  });

  im.server.Post("/sessions", [&im](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      std::map<std::string, bool> pretest;
      if (body.contains("pretest")) pretest = body.at("pretest").get<std::map<std::string, bool>>();
      const SessionInfo info = im.service.create_session(
          body.value("domain", im.options.default_domain), body.at("participant").get<std::string>(),
          body.at("seed").get<std::uint64_t>(), pretest);
      res.status = 201;
      res.set_content(to_json(info), "application/json");
    });
  });

  im.server.Get(R"(/sessions/([^/]+)/next)", [&im](const httplib::Request& req,
                                                   httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const auto view = im.service.next(id);
      if (view) {
        res.set_content(to_json(*view), "application/json");
      } else {
        json done = json::parse(to_json(im.service.info(id)));
        done["status"] = "finished";
        res.set_content(done.dump(), "application/json");
      }
    });
  });

  im.server.Post(R"(/sessions/([^/]+)/labels)", [&im](const httplib::Request& req,
                                                      httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const json& label = body.at("label");
      if (!label.is_number_integer()) throw InvalidLabel("label must be 0 or 1");
      const LabelAck ack = im.service.post_label(
          req.matches[1], body.at("transition_index").get<std::size_t>(), label.get<int>());
      res.set_content(to_json(ack), "application/json");
    });
  });

  im.server.Get("/export", [&im](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string filter = req.has_param("filter") ? req.get_param_value("filter") : "";
      if (!filter.empty() && filter != "firsttrace") {
        throw ConfigError("unknown filter '" + filter + "'");
      }
      const std::string domain =
          req.has_param("domain") ? req.get_param_value("domain") : im.options.default_domain;
      std::ostringstream out;
      write_dataset(out, im.service.export_study(domain, filter == "firsttrace"));
      res.set_content(out.str(), "application/x-ndjson");
    });
  });
}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool LabelServer::serve() { return impl_->server.listen_after_bind(); }

void LabelServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool LabelServer::running() const { return impl_->server.is_running(); }

}  // namespace recon
