#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "lightattack/providers.hpp"

namespace lightattack {

struct RemoteEndpoint {
  std::string base_url;  // e.g. http://localhost:8099
  std::chrono::milliseconds timeout{10000};
  int retries = 2;

  void validate() const;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ProtocolError on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Wire protocol:
//   GET  /health      -> {"name": str, "dim": int}
//   POST /embed/image    {"image_png_b64": str}   -> {"embedding": [f...], "dim": int}
//   POST /embed/text     {"texts": [str...]}       -> {"embeddings": [[f...]...], "dim": int}
// Transport failures are retried `retries` times, then raise TransportError.
// Malformed bodies and dimension disagreements raise ProtocolError.

ProviderInfo remote_health(const RemoteEndpoint& endpoint);
Embedding remote_embed_image(const RemoteEndpoint& endpoint, const ImageBuffer& img);
std::vector<Embedding> remote_embed_texts(const RemoteEndpoint& endpoint,
                                          const std::vector<std::string>& labels);

/// Provider backed by the sidecar. Queries /health once at construction and
/// checks every response against the advertised dimension. Calls are serialized.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(RemoteEndpoint endpoint);

  ProviderInfo info() const override { return info_; }
  Embedding embed_image(const ImageBuffer& img) const override;
  std::vector<Embedding> embed_texts(const std::vector<std::string>& labels) const override;

 private:
  RemoteEndpoint endpoint_;
  ProviderInfo info_;
  mutable std::mutex mutex_;
};

}  // namespace lightattack
