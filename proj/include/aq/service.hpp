/* Copyright 2026 The aqtune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// JSON-over-HTTP front end for a loaded model. The request handlers are
// plain functions of (method, path, body) so they can be exercised without a
// socket; Server binds them to cpp-httplib.

#ifndef AQ_SERVICE_HPP_
#define AQ_SERVICE_HPP_

#include <atomic>
#include <memory>
#include <optional>
#include <string>

#include "aq/aqgan.hpp"
#include "aq/json_io.hpp"
#include "aq/quantenv.hpp"

namespace aq::api {

inline constexpr std::size_t kMaxCount = 1000;

struct ApiResponse {
  int status = 200;
  Json body;
};

class Handlers {
 public:
  // Either argument may be absent: no model gives 503 on model endpoints, no
  // environment gives 409 on /evaluate.
  Handlers(std::optional<TrainedModel> model, std::optional<Environment> env);

  ApiResponse model_info() const;
  ApiResponse generate(const std::string& body) const;
  ApiResponse tune(const std::string& body) const;
  ApiResponse evaluate(const std::string& body) const;
  ApiResponse dispatch(const std::string& method, const std::string& path, const std::string& body) const;

  bool has_model() const { return model_.has_value(); }
  bool has_environment() const { return env_.has_value(); }

 private:
  Json proposal_json(const Proposal& p) const;

  std::optional<TrainedModel> model_;
  std::optional<Environment> env_;
};

std::string render(const ApiResponse& response);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  bool cors = true;
  int threads = 0;  // <= 0: hardware concurrency
};

class Server {
 public:
  Server(std::shared_ptr<const Handlers> handlers, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds the socket and returns the bound port; throws kIo on failure.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aq::api

#endif  // AQ_SERVICE_HPP_
