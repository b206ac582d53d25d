#pragma once

#include <memory>
#include <string>

#include "recon/study.hpp"

namespace recon {

struct ServerOptions {
  /// Value of Access-Control-Allow-Origin.
  std::string allowed_origin = "*";
  std::string default_domain = "warehouse";
};

/// HTTP+JSON front end for StudyService.
///
///   POST /sessions                {domain?, participant, seed, pretest: {a..d: bool}}
///   GET  /sessions/{id}/next
///   POST /sessions/{id}/labels    {transition_index, label}
///   GET  /export?filter=firsttrace[&domain=...]
///   GET  /pretest
///
/// Errors map to 400 (bad request/label), 404 (unknown session or domain),
/// 409 (cursor conflict), 412 (pretest failed), 500 otherwise.
class LabelServer {
 public:
  LabelServer(StudyService& service, ServerOptions options = {});
  ~LabelServer();

  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  /// Binds to port (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); returns false if the listener failed.
  bool serve();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace recon
