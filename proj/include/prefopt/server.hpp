// Copyright 2026 The prefopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PREFOPT_SERVER_HPP_
#define PREFOPT_SERVER_HPP_

#include <cstdint>
#include <memory>
#include <string>

#include "prefopt/session.hpp"

namespace prefopt {

struct ServerOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::string bearer_token;   // empty: no authorization check
};

// HTTP JSON API plus a WebSocket row stream over a SessionManager.
// One thread per connection; sessions serialise their own mutations.
class Server {
 public:
  Server(std::shared_ptr<SessionManager> sessions, ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();
  std::uint16_t port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prefopt

#endif  // PREFOPT_SERVER_HPP_
