#include "ckprobe/remote_scorer.hpp"

#include <httplib.h>

#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "ckprobe/errors.hpp"

namespace ckprobe {

using nlohmann::json;

std::string encode_fill_mask_request(std::string_view model,
                                     std::span<const TokenId> token_ids,
                                     std::size_t mask_index) {
  json body = {{"model", model},
               {"token_ids", std::vector<TokenId>(token_ids.begin(), token_ids.end())},
               {"mask_index", mask_index}};
  return body.dump();
}

std::string encode_fill_mask_response(const Distribution& d) {
  json logprobs = json::array();
  for (double lp : d.logprobs) {
    if (std::isinf(lp) && lp < 0) {
      logprobs.push_back(nullptr);
    } else {
      logprobs.push_back(lp);
    }
  }
  json body = {{"vocab_size", d.size()}, {"logprobs", std::move(logprobs)}};
  return body.dump();
}

Distribution decode_fill_mask_response(std::string_view body,
                                       std::size_t expected_vocab_size) {
  json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ProtocolError(200, "response body is not a JSON object");
  }
  if (!doc.contains("vocab_size") || !doc["vocab_size"].is_number_unsigned()) {
    throw ProtocolError(200, "response lacks integer vocab_size");
  }
  const auto vocab_size = doc["vocab_size"].get<std::size_t>();
  if (vocab_size != expected_vocab_size) {
    throw ConfigError("server vocabulary size " + std::to_string(vocab_size) +
                      " does not match local vocabulary size " +
                      std::to_string(expected_vocab_size));
  }
  const auto it = doc.find("logprobs");
  if (it == doc.end() || !it->is_array() || it->size() != vocab_size) {
    throw ProtocolError(200, "logprobs must be an array of length vocab_size");
  }
  Distribution d;
  d.logprobs.reserve(vocab_size);
  for (const auto& v : *it) {
    if (v.is_null()) {
      d.logprobs.push_back(-std::numeric_limits<double>::infinity());
    } else if (v.is_number()) {
      d.logprobs.push_back(v.get<double>());
    } else {
      throw ProtocolError(200, "logprobs entries must be numbers or null");
    }
  }
  return d;
}

ScorerInfo decode_info_response(std::string_view body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("model") ||
      !doc["model"].is_string() || !doc.contains("vocab_size") ||
      !doc["vocab_size"].is_number_unsigned() || !doc.contains("max_len") ||
      !doc["max_len"].is_number_unsigned()) {
    throw ProtocolError(200, "malformed /v1/info response");
  }
  return ScorerInfo{doc["model"].get<std::string>(),
                    doc["vocab_size"].get<std::size_t>(),
                    doc["max_len"].get<std::size_t>()};
}

std::string encode_info_response(const ScorerInfo& info) {
  json body = {{"model", info.model},
               {"vocab_size", info.vocab_size},
               {"max_len", info.max_len}};
  return body.dump();
}

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must look like http://host:port, got '" + url + "'");
  }
  if (url.substr(0, scheme_end) != "http") {
    throw ConfigError("only http endpoints are supported, got '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    ep.path_prefix = url.substr(path_start);
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') {
      ep.path_prefix.pop_back();
    }
  }
  return ep;
}

std::string server_message(const httplib::Result& res) {
  json doc = json::parse(res->body, nullptr, false);
  if (!doc.is_discarded() && doc.is_object() && doc.contains("error") &&
      doc["error"].is_string()) {
    return doc["error"].get<std::string>();
  }
  return res->body;
}

}  // namespace

namespace detail {

class ConnectionPool {
 public:
  ConnectionPool(Endpoint ep, const RemoteOptions& opts) : ep_(std::move(ep)), opts_(opts) {}

  std::unique_ptr<httplib::Client> acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !idle_.empty() || created_ < opts_.pool_size; });
    if (!idle_.empty()) {
      auto client = std::move(idle_.back());
      idle_.pop_back();
      return client;
    }
    ++created_;
    lock.unlock();
    auto client = std::make_unique<httplib::Client>(ep_.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
        opts_.timeout - secs);
    client->set_connection_timeout(secs.count(), usecs.count());
    client->set_read_timeout(secs.count(), usecs.count());
    client->set_write_timeout(secs.count(), usecs.count());
    client->set_keep_alive(true);
    client->set_decompress(true);
    return client;
  }

  void release(std::unique_ptr<httplib::Client> client) {
    {
      std::lock_guard lock(mutex_);
      if (client) {
        idle_.push_back(std::move(client));
      } else {
        --created_;
      }
    }
    cv_.notify_one();
  }

  const std::string& prefix() const { return ep_.path_prefix; }

 private:
  Endpoint ep_;
  RemoteOptions opts_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
  std::size_t created_ = 0;
};

}  // namespace detail

namespace {

template <typename Call>
std::string request_with_retry(detail::ConnectionPool& pool,
                               const RemoteOptions& opts, const Call& call) {
  int attempts = 0;
  std::string last_error;
  while (true) {
    ++attempts;
    auto client = pool.acquire();
    httplib::Result res = call(*client);
    if (res) {
      const int status = res->status;
      std::string body = status == 200 ? std::move(res->body) : std::string();
      std::string message = status == 200 ? std::string() : server_message(res);
      pool.release(std::move(client));
      if (status != 200) throw ProtocolError(status, message);
      return body;
    }
    last_error = httplib::to_string(res.error());
    // Broken connections are not returned to the pool.
    pool.release(nullptr);
    if (attempts > opts.max_retries) {
      throw TransportError("request failed after " + std::to_string(attempts) +
                               " attempt(s): " + last_error,
                           attempts, /*retryable=*/true);
    }
    std::this_thread::sleep_for(opts.retry_backoff * attempts);
  }
}

const httplib::Headers& request_headers() {
  static const httplib::Headers kHeaders = {{"Accept-Encoding", "gzip, deflate"}};
  return kHeaders;
}

}  // namespace

std::string RemoteScorer::get_with_retry(const std::string& path) const {
  const std::string full = pool_->prefix() + path;
  return request_with_retry(*pool_, opts_, [&](httplib::Client& c) {
    return c.Get(full, request_headers());
  });
}

std::string RemoteScorer::post_with_retry(const std::string& path,
                                          const std::string& body) const {
  const std::string full = pool_->prefix() + path;
  return request_with_retry(*pool_, opts_, [&](httplib::Client& c) {
    return c.Post(full, request_headers(), body, "application/json");
  });
}

RemoteScorer::RemoteScorer(const std::string& endpoint, const Vocab& vocab,
                           RemoteOptions opts)
    : opts_(std::move(opts)), mask_id_(vocab.mask_id()) {
  if (opts_.pool_size == 0) throw ConfigError("connection pool size must be positive");
  pool_ = std::make_unique<detail::ConnectionPool>(parse_endpoint(endpoint), opts_);
  ScorerInfo server = decode_info_response(get_with_retry("/v1/info"));
  if (server.vocab_size != vocab.size()) {
    throw ConfigError("server vocabulary size " + std::to_string(server.vocab_size) +
                      " does not match local vocabulary size " +
                      std::to_string(vocab.size()));
  }
  server_model_ = server.model;
  info_ = ScorerInfo{opts_.model, server.vocab_size, server.max_len};
}

RemoteScorer::~RemoteScorer() = default;

Distribution RemoteScorer::score_masked(const TokenSeq& tokens,
                                        std::size_t mask_index) const {
  validate_masked_query(tokens, mask_index, mask_id_, info_.max_len);
  const std::string body =
      post_with_retry("/v1/fill-mask",
                      encode_fill_mask_request(opts_.model, tokens.ids, mask_index));
  return decode_fill_mask_response(body, info_.vocab_size);
}

std::optional<std::string> default_endpoint() {
  const char* v = std::getenv(kEndpointEnvVar);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

}  // namespace ckprobe
