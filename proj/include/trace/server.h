#pragma once

#include <memory>
#include <string>

#include "trace/api.h"

namespace httplib {
class Server;
}

namespace trace {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string cors_origin;
};

// Read-only HTTP front end over an Api. Every response carries
// X-Trace-Format: 1 and a JSON body.
class HttpServer {
 public:
  HttpServer(const Api& api, ServerOptions options);
  ~HttpServer();

  // Binds the socket and returns the bound port. Throws on failure.
  int bind();
  // Serves until stop() is called; call bind() first.
  void run();
  void stop();

 private:
  const Api& api_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace trace
