#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "ckprobe/scorer.hpp"

namespace ckprobe {

// Environment variable holding the default model server endpoint.
inline constexpr const char* kEndpointEnvVar = "CKPROBE_ENDPOINT";

struct RemoteOptions {
  std::string model = "bert-base-uncased";
  std::chrono::milliseconds timeout{30000};
  std::size_t pool_size = 8;
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{200};
};

// Wire encoding helpers for POST /v1/fill-mask and GET /v1/info. Negative
// infinity has no JSON representation and travels as null.
std::string encode_fill_mask_request(std::string_view model,
                                     std::span<const TokenId> token_ids,
                                     std::size_t mask_index);
std::string encode_fill_mask_response(const Distribution& d);

/// Throws ProtocolError on a malformed body and ConfigError when the reported
/// vocabulary size differs from `expected_vocab_size`.
Distribution decode_fill_mask_response(std::string_view body,
                                       std::size_t expected_vocab_size);

ScorerInfo decode_info_response(std::string_view body);
std::string encode_info_response(const ScorerInfo& info);

namespace detail {
class ConnectionPool;
}

/// Client for a fill-mask model server. Construction queries /v1/info and
/// checks the server vocabulary against `vocab`. Requests are multiplexed over
/// a bounded pool of keep-alive connections.
class RemoteScorer final : public Scorer {
 public:
  RemoteScorer(const std::string& endpoint, const Vocab& vocab,
               RemoteOptions opts = {});
  ~RemoteScorer() override;

  RemoteScorer(const RemoteScorer&) = delete;
  RemoteScorer& operator=(const RemoteScorer&) = delete;

  const ScorerInfo& info() const override { return info_; }
  Distribution score_masked(const TokenSeq& tokens,
                            std::size_t mask_index) const override;

  /// Model name reported by the server (may differ from the requested one).
  const std::string& server_model() const noexcept { return server_model_; }

 private:
  std::string get_with_retry(const std::string& path) const;
  std::string post_with_retry(const std::string& path,
                              const std::string& body) const;

  RemoteOptions opts_;
  TokenId mask_id_;
  ScorerInfo info_;
  std::string server_model_;
  std::unique_ptr<detail::ConnectionPool> pool_;
};

/// Endpoint from the CKPROBE_ENDPOINT environment variable, if set.
std::optional<std::string> default_endpoint();

}  // namespace ckprobe
