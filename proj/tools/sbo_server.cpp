// Copyright 2026 The sbo Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// HTTP front end for live sessions. Logs go to $SBO_DATA_DIR.
#include <cstdlib>
#include <iostream>
#include <string>

// Before httplib: <resolv.h> defines a _res macro that breaks Eigen.
#include "sbo/session_service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

int main(int argc, char** argv) {
  CLI::App app{"Social Bayesian optimization session server"};
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string facilitator_token;
  bool voter_tokens = false;
  std::string static_dir;
  app.add_option("--port", port, "listen port");
  app.add_option("--host", host, "listen address");
  app.add_option("--facilitator-token", facilitator_token, "bearer token required to create sessions");
  app.add_flag("--voter-tokens", voter_tokens, "issue per-agent tokens and require them on votes");
  app.add_option("--static", static_dir, "directory of UI assets served at /");
  CLI11_PARSE(app, argc, argv);

  const char* env = std::getenv("SBO_DATA_DIR");
  const std::string data_dir = env ? env : "";
  try {
    sbo::SessionManager mgr(data_dir, voter_tokens);
    httplib::Server srv;
    if (!static_dir.empty() && !srv.set_mount_point("/", static_dir)) {
      std::cerr << "sbo_server: cannot serve " << static_dir << '\n';
      return 1;
    }
    auto handler = [&](const httplib::Request& req, httplib::Response& res) {
      std::string bearer;
      const auto auth = req.get_header_value("Authorization");
      if (auth.rfind("Bearer ", 0) == 0) bearer = auth.substr(7);
      const auto r = sbo::route(mgr, req.method, req.path, req.body, bearer, facilitator_token);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    srv.Post("/sessions", handler);
    srv.Get(R"(/sessions/[^/]+/(next-pair|estimate|trace))", handler);
    srv.Post(R"(/sessions/[^/]+/votes)", handler);
    std::cerr << "sbo_server: " << mgr.ids().size() << " sessions restored; listening on " << host << ':' << port
              << '\n';
    if (!srv.listen(host, port)) {
      std::cerr << "sbo_server: cannot bind " << host << ':' << port << '\n';
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "sbo_server: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
