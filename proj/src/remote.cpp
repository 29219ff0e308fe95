#include "lightattack/remote.hpp"

#include "lightattack/errors.hpp"
#include "lightattack/persistence.hpp"

// After the Eigen headers: <resolv.h> defines a _res macro.
#include <httplib.h>

#include <json.hpp>

namespace lightattack {

using nlohmann::json;

void RemoteEndpoint::validate() const {
  if (base_url.empty()) throw std::invalid_argument("endpoint URL is empty");
  if (timeout.count() <= 0) throw std::invalid_argument("endpoint timeout must be positive");
  if (retries < 0) throw std::invalid_argument("endpoint retries must be >= 0");
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t n = bytes[i] << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (char c : text) {
    if (c == '=') {
      ++pad;
      continue;
    }
    if (pad > 0) throw ProtocolError("base64: data after padding");
    const int v = decode_char(c);
    if (v < 0) throw ProtocolError("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  if (pad > 2) throw ProtocolError("base64: too much padding");
  return out;
}

namespace {

httplib::Client make_client(const RemoteEndpoint& ep) {
  httplib::Client cli(ep.base_url);
  if (!cli.is_valid()) throw std::invalid_argument("invalid endpoint URL '" + ep.base_url + "'");
  const auto secs = ep.timeout.count() / 1000;
  const auto usecs = (ep.timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  return cli;
}

json parse_body(const httplib::Result& res, const std::string& path) {
  if (res->status != 200) {
    throw ProtocolError(path + " answered HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(path + " returned malformed JSON: " + e.what());
  }
}

// Retries only transport-level failures; an HTTP answer of any kind is final.
json request(const RemoteEndpoint& ep, const std::string& path, const json* body) {
  ep.validate();
  auto cli = make_client(ep);
  std::string last_error;
  for (int attempt = 0; attempt <= ep.retries; ++attempt) {
    auto res = body ? cli.Post(path, body->dump(), "application/json") : cli.Get(path);
    if (res) return parse_body(res, path);
    last_error = httplib::to_string(res.error());
  }
  throw TransportError(ep.base_url + path + ": " + last_error + " after " +
                       std::to_string(ep.retries + 1) + " attempt(s)");
}

std::size_t get_dim(const json& j, const std::string& path) {
  auto it = j.find("dim");
  if (it == j.end() || !it->is_number_integer() || it->get<long long>() <= 0) {
    throw ProtocolError(path + ": missing or invalid 'dim'");
  }
  return it->get<std::size_t>();
}

Embedding get_vector(const json& j, std::size_t dim, const std::string& path) {
  if (!j.is_array()) throw ProtocolError(path + ": embedding is not an array");
  Embedding v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ProtocolError(path + ": embedding entry is not a number");
    v.push_back(x.get<double>());
  }
  if (v.size() != dim) {
    throw ProtocolError(path + ": embedding has " + std::to_string(v.size()) +
                        " entries, advertised dim " + std::to_string(dim));
  }
  return v;
}

}  // namespace

ProviderInfo remote_health(const RemoteEndpoint& endpoint) {
  const json j = request(endpoint, "/health", nullptr);
  auto name = j.find("name");
  if (name == j.end() || !name->is_string()) throw ProtocolError("/health: missing 'name'");
  return {name->get<std::string>(), get_dim(j, "/health")};
}

Embedding remote_embed_image(const RemoteEndpoint& endpoint, const ImageBuffer& img) {
  const json body = {{"image_png_b64", base64_encode(encode_png(img))}};
  const json j = request(endpoint, "/embed/image", &body);
  const std::size_t dim = get_dim(j, "/embed/image");
  auto emb = j.find("embedding");
  if (emb == j.end()) throw ProtocolError("/embed/image: missing 'embedding'");
  return get_vector(*emb, dim, "/embed/image");
}

std::vector<Embedding> remote_embed_texts(const RemoteEndpoint& endpoint,
                                          const std::vector<std::string>& labels) {
  const json body = {{"texts", labels}};
  const json j = request(endpoint, "/embed/text", &body);
  const std::size_t dim = get_dim(j, "/embed/text");
  auto embs = j.find("embeddings");
  if (embs == j.end() || !embs->is_array()) throw ProtocolError("/embed/text: missing 'embeddings'");
  if (embs->size() != labels.size()) {
    throw ProtocolError("/embed/text: " + std::to_string(embs->size()) + " embeddings for " +
                        std::to_string(labels.size()) + " texts");
  }
  std::vector<Embedding> out;
  out.reserve(labels.size());
  for (const auto& e : *embs) out.push_back(get_vector(e, dim, "/embed/text"));
  return out;
}

RemoteProvider::RemoteProvider(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  info_ = remote_health(endpoint_);
}

namespace {

void check_dim(const Embedding& e, const ProviderInfo& info, const char* what) {
  if (e.size() != info.embedding_dim) {
    throw ProtocolError(std::string(what) + " returned dim " + std::to_string(e.size()) +
                        ", /health advertised " + std::to_string(info.embedding_dim));
  }
}

}  // namespace

Embedding RemoteProvider::embed_image(const ImageBuffer& img) const {
  std::lock_guard lock(mutex_);
  Embedding e = remote_embed_image(endpoint_, img);
  check_dim(e, info_, "/embed/image");
  return e;
}

std::vector<Embedding> RemoteProvider::embed_texts(const std::vector<std::string>& labels) const {
  std::lock_guard lock(mutex_);
  auto out = remote_embed_texts(endpoint_, labels);
  for (const auto& e : out) check_dim(e, info_, "/embed/text");
  return out;
}

}  // namespace lightattack
