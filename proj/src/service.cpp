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

#include "aq/service.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <map>
#include <random>
#include <thread>

#include "aq/error.hpp"
#include "aq/hwtune.hpp"

// Last: <resolv.h> defines a `_res` macro that breaks later Eigen includes.
#include <httplib.h>

namespace aq::api {
namespace {

ApiResponse error_response(int status, const std::string& code, const std::string& message,
                           const std::map<std::string, std::string>& fields = {}) {
  Json err{{"code", code}, {"message", message}};
  if (!fields.empty()) err["fields"] = fields;
  return {status, Json{{"error", err}}};
}

ApiResponse invalid(const std::map<std::string, std::string>& fields) {
  std::string message = "invalid request body";
  for (const auto& [k, v] : fields) message += "; " + k + ": " + v;
  return error_response(400, "invalid_body", message, fields);
}

ApiResponse no_model() {
  return error_response(503, "model_not_loaded", "no model is loaded in this service");
}

// Parses the body as a JSON object or explains why not.
std::optional<ApiResponse> parse_object(const std::string& body, Json& out) {
  try {
    out = Json::parse(body);
  } catch (const Json::exception& e) {
    return error_response(400, "invalid_json", std::string("body is not valid JSON: ") + e.what());
  }
  if (!out.is_object()) return error_response(400, "invalid_json", "body must be a JSON object");
  return std::nullopt;
}

// Shared fields of /generate and /tune.
struct GenerateRequest {
  double target = 0.0;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

std::optional<ApiResponse> parse_generate(const Json& doc, GenerateRequest& req,
                                          std::map<std::string, std::string>& fields) {
  if (!doc.contains("target_accuracy"))
    fields["target_accuracy"] = "required";
  else if (!doc["target_accuracy"].is_number() || !std::isfinite(doc["target_accuracy"].get<double>()))
    fields["target_accuracy"] = "must be a finite number";
  else
    req.target = doc["target_accuracy"].get<double>();

  bool count_in_range = true;
  if (!doc.contains("count")) {
    fields["count"] = "required";
  } else if (!doc["count"].is_number_integer()) {
    fields["count"] = "must be an integer";
  } else {
    const auto c = doc["count"].get<std::int64_t>();
    count_in_range = c >= 1 && static_cast<std::uint64_t>(c) <= kMaxCount;
    if (count_in_range) req.count = static_cast<std::size_t>(c);
  }

  if (doc.contains("seed") && !doc["seed"].is_null()) {
    if (!doc["seed"].is_number_unsigned())
      fields["seed"] = "must be a non-negative integer";
    else
      req.seed = doc["seed"].get<std::uint64_t>();
  } else {
    req.seed = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
  }
  if (!fields.empty()) return invalid(fields);
  if (!count_in_range)
    return error_response(422, "out_of_range", "count must be in [1, " + std::to_string(kMaxCount) + "]",
                          {{"count", "must be in [1, " + std::to_string(kMaxCount) + "]"}});
  return std::nullopt;
}

}  // namespace

Handlers::Handlers(std::optional<TrainedModel> model, std::optional<Environment> env)
    : model_(std::move(model)), env_(std::move(env)) {
  if (model_ && env_) require_same_environment(model_->environment, env_->descriptor());
}

Json Handlers::proposal_json(const Proposal& p) const {
  const auto r = hw::resources(model_->environment.resources, p.config);
  return Json{{"config", p.config.bits},
              {"predicted_label", p.predicted_label},
              {"predicted_accuracy", denormalize(p.predicted_label, model_->labels)},
              {"param_bytes", r.param_bytes},
              {"act_bytes_sum", r.act_bytes_sum},
              {"act_bytes_peak", r.act_bytes_peak}};
}

ApiResponse Handlers::model_info() const {
  if (!model_) return no_model();
  return {200, Json{{"layer_count", model_->layer_count()},
                    {"acc_min", model_->labels.acc_min},
                    {"acc_max", model_->labels.acc_max},
                    {"baseline_accuracy", model_->environment.baseline_accuracy},
                    {"environment", model_->environment.to_json()},
                    {"evaluation_available", env_.has_value()},
                    {"max_count", kMaxCount}}};
}

ApiResponse Handlers::generate(const std::string& body) const {
  if (!model_) return no_model();
  Json doc;
  if (auto bad = parse_object(body, doc)) return *bad;
  GenerateRequest req;
  std::map<std::string, std::string> fields;
  if (auto bad = parse_generate(doc, req, fields)) return *bad;

  const auto g = aq::generate(*model_, req.target, req.count, req.seed);
  Json proposals = Json::array();
  for (const auto& p : g.proposals) proposals.push_back(proposal_json(p));
  return {200, Json{{"proposals", proposals},
                    {"clamped", g.clamped},
                    {"label", g.label},
                    {"seed", req.seed},
                    {"target_accuracy", req.target}}};
}

ApiResponse Handlers::tune(const std::string& body) const {
  if (!model_) return no_model();
  Json doc;
  if (auto bad = parse_object(body, doc)) return *bad;
  GenerateRequest req;
  std::map<std::string, std::string> fields;

  hw::Budget budget;
  bool caps_positive = true;
  if (!doc.contains("budget")) {
    fields["budget"] = "required";
  } else if (!doc["budget"].is_object()) {
    fields["budget"] = "must be an object";
  } else {
    for (const auto& [key, value] : doc["budget"].items()) {
      const std::string name = "budget." + key;
      if (key != "param_bytes" && key != "act_bytes_sum" && key != "act_bytes_peak") {
        fields[name] = "unknown cap";
      } else if (value.is_null()) {
        continue;
      } else if (!value.is_number_integer()) {
        fields[name] = "must be an integer";
      } else if (value.get<std::int64_t>() <= 0) {
        caps_positive = false;
      } else {
        const auto cap = value.get<std::uint64_t>();
        (key == "param_bytes" ? budget.param_bytes : key == "act_bytes_sum" ? budget.act_bytes_sum
                                                                            : budget.act_bytes_peak) = cap;
      }
    }
  }
  if (auto bad = parse_generate(doc, req, fields)) return *bad;
  if (!caps_positive) return error_response(422, "out_of_range", "budget caps must be positive");

  const auto g = aq::generate(*model_, req.target, req.count, req.seed);
  const auto& spec = model_->environment.resources;
  const auto chosen = hw::select(g.proposals, spec, budget);
  Json proposals = Json::array();
  for (const auto& p : g.proposals) proposals.push_back(proposal_json(p));
  return {200, Json{{"selected", chosen ? proposal_json(chosen->proposal) : Json(nullptr)},
                    {"selected_index", chosen ? Json(chosen->input_index) : Json(nullptr)},
                    {"feasible_count", hw::feasible_count(g.proposals, spec, budget)},
                    {"proposals", proposals},
                    {"clamped", g.clamped},
                    {"label", g.label},
                    {"seed", req.seed},
                    {"target_accuracy", req.target}}};
}

ApiResponse Handlers::evaluate(const std::string& body) const {
  if (!env_)
    return error_response(409, "environment_not_attached",
                          "this service was started without a ground-truth environment");
  Json doc;
  if (auto bad = parse_object(body, doc)) return *bad;
  if (!doc.contains("configs")) return invalid({{"configs", "required"}});
  if (!doc["configs"].is_array()) return invalid({{"configs", "must be an array of bit-width arrays"}});

  const std::size_t layers = env_->layer_count();
  std::vector<QuantConfig> configs;
  std::map<std::string, std::string> fields;
  const auto& list = doc["configs"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string at = "configs[" + std::to_string(i) + "]";
    if (!list[i].is_array()) {
      fields[at] = "must be an array of integers";
      continue;
    }
    if (list[i].size() != layers) {
      fields[at] = "has " + std::to_string(list[i].size()) + " layers, expected " + std::to_string(layers);
      continue;
    }
    QuantConfig c{std::vector<int>(layers)};
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& b = list[i][l];
      if (!b.is_number_integer() || b.get<std::int64_t>() < QuantConfig::kMinBits ||
          b.get<std::int64_t>() > QuantConfig::kMaxBits) {
        fields[at + " layer " + std::to_string(l)] = "bit-width must be an integer in [1, 32]";
        break;
      }
      c.bits[l] = b.get<int>();
    }
    configs.push_back(std::move(c));
  }
  if (!fields.empty()) return invalid(fields);
  Json accuracies = Json::array();
  for (const auto& c : configs) accuracies.push_back(env_->evaluate(c));
  return {200, Json{{"accuracies", accuracies}}};
}

ApiResponse Handlers::dispatch(const std::string& method, const std::string& path,
                               const std::string& body) const {
  struct Route {
    const char* method;
    ApiResponse (Handlers::*post)(const std::string&) const;
  };
  static const std::map<std::string, Route> routes{
      {"/api/v1/model/info", {"GET", nullptr}},
      {"/api/v1/generate", {"POST", &Handlers::generate}},
      {"/api/v1/tune", {"POST", &Handlers::tune}},
      {"/api/v1/evaluate", {"POST", &Handlers::evaluate}},
  };
  const auto it = routes.find(path);
  if (it == routes.end()) return error_response(404, "not_found", "no route " + path);
  if (method != it->second.method)
    return error_response(405, "method_not_allowed", path + " accepts " + it->second.method);
  try {
    return it->second.post ? (this->*it->second.post)(body) : model_info();
  } catch (const Error& e) {
    return error_response(e.kind() == ErrorKind::kInput ? 422 : 500, std::string(to_string(e.kind())), e.what());
  }
}

std::string render(const ApiResponse& response) { return dump_json(response.body, -1); }

// ---------------------------------------------------------------------------

struct Server::Impl {
  std::shared_ptr<const Handlers> handlers;
  ServerOptions options;
  httplib::Server http;
};

Server::Server(std::shared_ptr<const Handlers> handlers, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->handlers = std::move(handlers);
  impl_->options = std::move(options);
  auto& http = impl_->http;
  const int threads = impl_->options.threads > 0 ? impl_->options.threads
                                                 : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  http.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  if (impl_->options.cors)
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});

  const auto h = impl_->handlers;
  auto serve = [h](const httplib::Request& req, httplib::Response& res) {
    const auto out = h->dispatch(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(render(out), "application/json");
    spdlog::debug("{} {} -> {}", req.method, req.path, out.status);
  };
  for (const char* path : {"/api/v1/model/info", "/api/v1/generate", "/api/v1/tune", "/api/v1/evaluate"}) {
    http.Get(path, serve);
    http.Post(path, serve);
  }
  http.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const auto out = error_response(res.status, res.status == 404 ? "not_found" : "http_error",
                                    "request to " + req.path + " failed with status " + std::to_string(res.status));
    res.set_content(render(out), "application/json");
  });
}

Server::~Server() { stop(); }

int Server::bind() {
  auto& o = impl_->options;
  int port = o.port;
  if (port == 0) {
    port = impl_->http.bind_to_any_port(o.host);
    if (port < 0) fail(ErrorKind::kIo, "could not bind " + o.host);
  } else if (!impl_->http.bind_to_port(o.host, port)) {
    fail(ErrorKind::kIo, "could not bind " + o.host + ":" + std::to_string(port));
  }
  spdlog::info("service bound to {}:{}", o.host, port);
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace aq::api
