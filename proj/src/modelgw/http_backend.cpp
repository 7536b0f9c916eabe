#include <cstdlib>

#include "httplib.h"
#include "proofforge/error.hpp"
#include "proofforge/modelgw.hpp"

namespace proofforge::modelgw {

using nlohmann::json;

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::invalid_argument, "endpoint is not an absolute URL: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string wire_model(const ModelSpec& spec) {
  if (spec.params.is_object() && spec.params.contains("model") && spec.params["model"].is_string()) {
    return spec.params["model"].get<std::string>();
  }
  return spec.name;
}

}  // namespace

std::string HttpBackend::api_key_env_var(Provider provider) {
  switch (provider) {
    case Provider::http_openai_style: return "PROOFFORGE_API_KEY_OPENAI";
    case Provider::http_anthropic_style: return "PROOFFORGE_API_KEY_ANTHROPIC";
    case Provider::scripted: break;
  }
  return {};
}

json HttpBackend::build_request(const ModelSpec& spec, const Transcript& t) {
  json body = json::object();
  if (spec.params.is_object()) {
    for (const auto& [k, v] : spec.params.items()) body[k] = v;
  }
  body["model"] = wire_model(spec);
  json messages = json::array();
  if (spec.provider == Provider::http_anthropic_style) {
    for (const auto& m : t.messages) {
      if (m.role == Role::system) {
        body["system"] = m.content;
      } else {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
      }
    }
    if (!body.contains("max_tokens")) body["max_tokens"] = 8192;
  } else {
    for (const auto& m : t.messages) {
      messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
  }
  body["messages"] = std::move(messages);
  return body;
}

std::string HttpBackend::parse_response(Provider provider, const json& body) {
  try {
    if (provider == Provider::http_anthropic_style) {
      std::string text;
      for (const auto& block : body.at("content")) {
        if (block.value("type", "text") == "text") text += block.at("text").get<std::string>();
      }
      return text;
    }
    const auto& content = body.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::provider, std::string("unexpected provider response shape: ") + e.what());
  }
}

std::string HttpBackend::send(const ModelSpec& spec, const Transcript& t) {
  validate(spec);
  Url url = split_url(*spec.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(spec.timeout);
  client.set_write_timeout(std::chrono::seconds(60));

  httplib::Headers headers;
  const char* key = std::getenv(api_key_env_var(spec.provider).c_str());
  if (spec.provider == Provider::http_anthropic_style) {
    if (key) headers.emplace("x-api-key", key);
    headers.emplace("anthropic-version", "2023-06-01");
  } else if (key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string payload = build_request(spec, t).dump();
  auto res = client.Post(url.path, headers, payload, "application/json");
  if (!res) {
    throw Error(ErrorKind::transport,
                "request to model '" + spec.name + "' failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw Error(ErrorKind::transport,
                "model '" + spec.name + "' returned HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorKind::provider, "model '" + spec.name + "' returned HTTP " +
                                         std::to_string(res->status) + ": " + res->body.substr(0, 500));
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::exception&) {
    throw Error(ErrorKind::provider, "model '" + spec.name + "' returned non-JSON body");
  }
  return parse_response(spec.provider, body);
}

}  // namespace proofforge::modelgw
