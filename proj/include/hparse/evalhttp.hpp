#pragma once

#include <httplib.h>

#include "hparse/evalserver.hpp"

namespace hparse {

// POST /submissions        body: uncompressed tar of <image_id>.png rasters
// GET  /submissions/{id}   submission status + report when scored
// GET  /leaderboard        scored submissions by mean IoU
inline void attach_routes(httplib::Server& srv, EvalService& service) {
  srv.Post("/submissions", [&service](const httplib::Request& req, httplib::Response& res) {
    const Submission s = service.submit(req.body);
    res.status = 201;
    res.set_content(submission_json(s), "application/json");
  });
  srv.Get(R"(/submissions/([^/]+))",
          [&service](const httplib::Request& req, httplib::Response& res) {
            const auto s = service.get(req.matches[1]);
            if (!s) {
              res.status = 404;
              res.set_content("{\"error\":\"unknown submission id\"}", "application/json");
              return;
            }
            res.set_content(submission_json(*s), "application/json");
          });
  srv.Get("/leaderboard", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(service.leaderboard_json(), "application/json");
  });
}

}  // namespace hparse
