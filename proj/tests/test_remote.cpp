#include <doctest.h>

#include "lightattack/attack.hpp"
#include "lightattack/errors.hpp"
#include "lightattack/persistence.hpp"
#include "lightattack/remote.hpp"
#include "lightattack/synthetic.hpp"

// After the Eigen headers: <resolv.h> defines a _res macro.
#include <httplib.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <json.hpp>
#include <random>
#include <thread>

using namespace lightattack;
using nlohmann::json;

namespace {

// A loopback port with nothing bound to it: bind an ephemeral port, then close it.
int unused_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

enum class StubMode { local, fixed, malformed, wrong_dim, wrong_count, http_error, slow, health_mismatch };

// Sidecar stand-in: serves the toy encoder or a scripted failure on a loopback port.
class StubServer {
 public:
  explicit StubServer(StubMode mode, std::size_t dim = kLocalEmbeddingDim) : mode_(mode), dim_(dim) {
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"name", "stub"}, {"dim", mode_ == StubMode::health_mismatch ? dim_ + 2 : dim_}}.dump(), "application/json");
    });
    server_.Post("/embed/image", [this](const httplib::Request& req, httplib::Response& res) {
      ++image_calls;
      if (mode_ == StubMode::slow) std::this_thread::sleep_for(std::chrono::milliseconds(400));
      Embedding e(dim_, 0.25);
      if (mode_ == StubMode::local) {
        const auto png = base64_decode(json::parse(req.body).at("image_png_b64").get<std::string>());
        e = local_embed_image(decode_png(png));
      }
      reply(res, json{{"embedding", e}, {"dim", dim_}});
    });
    server_.Post("/embed/text", [this](const httplib::Request& req, httplib::Response& res) {
      const auto texts = json::parse(req.body).at("texts").get<std::vector<std::string>>();
      std::vector<Embedding> out;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        if (mode_ == StubMode::local) {
          out.push_back(local_embed_text(texts[i]));
        } else {
          // Entry 0 carries the request position so ordering is observable.
          Embedding e(dim_, 0.0);
          e[0] = static_cast<double>(i);
          out.push_back(e);
        }
      }
      if (mode_ == StubMode::wrong_count) out.pop_back();
      reply(res, json{{"embeddings", out}, {"dim", dim_}});
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  RemoteEndpoint endpoint() const {
    return {"http://127.0.0.1:" + std::to_string(port_), std::chrono::milliseconds(5000), 2};
  }

  std::atomic<int> image_calls{0};

 private:
  void reply(httplib::Response& res, json body) {
    switch (mode_) {
      case StubMode::malformed:
        res.set_content("{\"embedding\": [0.1, ", "application/json");
        return;
      case StubMode::wrong_dim:
        body["dim"] = dim_ + 1;
        break;
      case StubMode::http_error:
        res.status = 500;
        res.set_content("boom", "text/plain");
        return;
      default:
        break;
    }
    res.set_content(body.dump(), "application/json");
  }

  StubMode mode_;
  std::size_t dim_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

// Local provider that sees images through the same 8-bit PNG round trip as the wire.
class QuantizingLocalProvider final : public EmbeddingProvider {
 public:
  ProviderInfo info() const override { return {"local-q8", kLocalEmbeddingDim}; }
  Embedding embed_image(const ImageBuffer& img) const override { return local_embed_image(quantize8(img)); }
  std::vector<Embedding> embed_texts(const std::vector<std::string>& labels) const override {
    return local_embed_texts(labels);
  }
};

}  // namespace

TEST_CASE("base64 round trip") {
  CHECK(base64_encode(std::vector<std::uint8_t>{}) == "");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a'}) == "TWE=");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M'}) == "TQ==");
  std::mt19937_64 rng(1);
  for (int n = 0; n < 50; ++n) {
    std::vector<std::uint8_t> b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    CHECK(base64_decode(base64_encode(b)) == b);
  }
  CHECK_THROWS_AS(base64_decode("TW!u"), ProtocolError);
}

TEST_CASE("endpoint validation") {
  CHECK_THROWS_AS((RemoteEndpoint{"", std::chrono::milliseconds(10), 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((RemoteEndpoint{"http://x", std::chrono::milliseconds(0), 0}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((RemoteEndpoint{"http://x", std::chrono::milliseconds(10), -1}.validate()),
                  std::invalid_argument);
}

TEST_CASE("fixed vector is returned verbatim") {
  StubServer stub(StubMode::fixed, 5);
  const auto info = remote_health(stub.endpoint());
  CHECK(info.name == "stub");
  CHECK(info.embedding_dim == 5);
  CHECK(remote_embed_image(stub.endpoint(), ImageBuffer(8, 8)) == Embedding(5, 0.25));
}

TEST_CASE("30 labels come back as 30 vectors in request order") {
  StubServer stub(StubMode::fixed, 4);
  const auto labels = coco30_labels();
  const auto out = remote_embed_texts(stub.endpoint(), labels);
  REQUIRE(out.size() == 30);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i][0] == static_cast<double>(i));
}

TEST_CASE("local-mode stub reproduces the toy encoder through the wire") {
  StubServer stub(StubMode::local);
  const RemoteProvider remote(stub.endpoint());
  CHECK(remote.info().embedding_dim == kLocalEmbeddingDim);
  const auto labels = coco30_labels();
  CHECK(remote.embed_texts(labels) == local_embed_texts(labels));
  const auto img = two_tone_image(40, 24, 3);
  CHECK(remote.embed_image(img) == local_embed_image(quantize8(img)));
}

TEST_CASE("failures") {
  SUBCASE("unreachable endpoint raises a transport error") {
    const std::string url = "http://127.0.0.1:" + std::to_string(unused_port());
    const RemoteEndpoint ep{url, std::chrono::milliseconds(500), 1};
    CHECK_THROWS_AS(remote_health(ep), TransportError);
    CHECK_THROWS_AS(remote_embed_texts(ep, {"dog", "cat"}), TransportError);
    CHECK_THROWS_AS(RemoteProvider{ep}, TransportError);
  }
  SUBCASE("timeouts are retried, then raise a transport error") {
    StubServer stub(StubMode::slow, 3);
    RemoteEndpoint ep = stub.endpoint();
    ep.timeout = std::chrono::milliseconds(100);
    ep.retries = 2;
    CHECK_THROWS_AS(remote_embed_image(ep, ImageBuffer(8, 8)), TransportError);
    CHECK(stub.image_calls.load() == 3);
  }
  SUBCASE("malformed body") {
    StubServer stub(StubMode::malformed, 3);
    CHECK_THROWS_AS(remote_embed_image(stub.endpoint(), ImageBuffer(8, 8)), ProtocolError);
    CHECK(stub.image_calls.load() == 1);
  }
  SUBCASE("advertised dim disagrees with the vector length") {
    StubServer stub(StubMode::wrong_dim, 3);
    CHECK_THROWS_AS(remote_embed_image(stub.endpoint(), ImageBuffer(8, 8)), ProtocolError);
    CHECK_THROWS_AS(remote_embed_texts(stub.endpoint(), {"a", "b"}), ProtocolError);
  }
  SUBCASE("response dim disagrees with /health") {
    StubServer stub(StubMode::health_mismatch, 3);
    const RemoteProvider p(stub.endpoint());
    CHECK(p.info().embedding_dim == 5);
    CHECK_THROWS_AS(p.embed_image(ImageBuffer(8, 8)), ProtocolError);
    CHECK_THROWS_AS(p.embed_texts({"a", "b"}), ProtocolError);
  }
  SUBCASE("wrong embedding count") {
    StubServer stub(StubMode::wrong_count, 3);
    CHECK_THROWS_AS(remote_embed_texts(stub.endpoint(), {"a", "b", "c"}), ProtocolError);
  }
  SUBCASE("non-200 status") {
    StubServer stub(StubMode::http_error, 3);
    CHECK_THROWS_AS(remote_embed_image(stub.endpoint(), ImageBuffer(8, 8)), ProtocolError);
    CHECK(stub.image_calls.load() == 1);
  }
}

TEST_CASE("remote stub and a quantizing local provider give identical attack trajectories") {
  StubServer stub(StubMode::local);
  const RemoteProvider remote(stub.endpoint());
  const QuantizingLocalProvider local;
  const PyramidFeatureExtractor fx;
  const auto img = two_tone_image(32, 32, 7);
  const LabelSet labels({"dog", "cat", "bird", "car", "boat"}, 0);
  AttackConfig cfg;
  cfg.population = 6;
  cfg.max_iters = 4;
  cfg.seed = 42;
  const auto a = run_attack(img, labels, cfg, remote, fx);
  const auto b = run_attack(img, labels, cfg, local, fx);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    CHECK(a.trajectory[i].best_fitness == b.trajectory[i].best_fitness);
    CHECK(a.trajectory[i].mean == b.trajectory[i].mean);
    CHECK(a.trajectory[i].sigma == b.trajectory[i].sigma);
  }
  CHECK(a.lambda_star == b.lambda_star);
  CHECK(a.adversarial == b.adversarial);
  CHECK(a.faults == 0);
}
