#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "ftn/digest.hpp"
#include "ftn/errors.hpp"
#include "ftn/tasks.hpp"

namespace fs = std::filesystem;

namespace {

// Serves an in-memory file map under /files/<name> and counts hits.
struct MockServer {
  std::map<std::string, std::string> files;
  std::atomic<int> requests{0};
  httplib::Server svr;
  int port = 0;
  std::thread thread;

  void start() {
    svr.Get("/files/:name", [this](const httplib::Request& req,
                                   httplib::Response& res) {
      ++requests;
      auto it = files.find(req.path_params.at("name"));
      if (it == files.end()) {
        res.status = 404;
        return;
      }
      res.set_content(it->second, "application/octet-stream");
    });
    port = svr.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { svr.listen_after_bind(); });
    while (!svr.is_running()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }

  ~MockServer() {
    svr.stop();
    if (thread.joinable()) thread.join();
  }

  std::string base() const {
    return "http://127.0.0.1:" + std::to_string(port) + "/files";
  }
};

fs::path fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

// Four small payloads shaped like the real archives.
struct Corpus {
  std::vector<ftn::RemoteFile> manifest;
  std::map<std::string, std::string> bodies;
};

Corpus make_corpus() {
  auto data = testutil::make_glyph_data(6, 4, 19);
  auto pack = [](const std::vector<std::uint8_t>& raw) {
    auto gz = testutil::gzip_bytes(raw);
    return std::string(gz.begin(), gz.end());
  };
  Corpus c;
  c.bodies["train-images-idx3-ubyte.gz"] =
      pack(testutil::idx_image_bytes(data.train_images, 6));
  c.bodies["train-labels-idx1-ubyte.gz"] =
      pack(testutil::idx_label_bytes(data.train_labels));
  c.bodies["t10k-images-idx3-ubyte.gz"] =
      pack(testutil::idx_image_bytes(data.test_images, 4));
  c.bodies["t10k-labels-idx1-ubyte.gz"] =
      pack(testutil::idx_label_bytes(data.test_labels));
  for (const auto& [name, body] : c.bodies) {
    c.manifest.push_back({name, body.size(), ftn::sha256_hex(body)});
  }
  return c;
}

}  // namespace

TEST_CASE("fetch downloads, verifies, and skips files already present") {
  Corpus c = make_corpus();
  MockServer server;
  server.files = c.bodies;
  server.start();
  fs::path dir = fresh_dir("ftn_test_fetch");

  auto paths = ftn::fetch_mnist(server.base(), dir.string(), c.manifest);
  REQUIRE(paths.size() == 4);
  CHECK(server.requests == 4);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    CHECK(slurp(paths[i]) == c.bodies.at(c.manifest[i].name));
  }

  // Everything verifies in place: the second fetch causes no traffic.
  auto again = ftn::fetch_mnist(server.base(), dir.string(), c.manifest);
  CHECK(again == paths);
  CHECK(server.requests == 4);

  // A corrupted local file is quarantined and re-downloaded.
  fs::path victim = dir / c.manifest[1].name;
  { std::ofstream(victim, std::ios::trunc) << "scribble"; }
  auto repaired = ftn::fetch_mnist(server.base(), dir.string(), c.manifest);
  CHECK(repaired == paths);
  CHECK(server.requests == 5);
  CHECK(slurp(victim) == c.bodies.at(c.manifest[1].name));
  fs::path moved = victim;
  moved += ".quarantine";
  CHECK(fs::exists(moved));
  CHECK(slurp(moved) == "scribble");
}

TEST_CASE("fetch rejects bodies whose digest or size disagrees") {
  Corpus c = make_corpus();
  MockServer server;
  server.files = c.bodies;
  server.start();

  SUBCASE("digest mismatch quarantines the download") {
    auto bad = c.manifest;
    bad[2].sha256 = std::string(64, '0');
    fs::path dir = fresh_dir("ftn_test_fetch_digest");
    CHECK_THROWS_WITH_AS(
        (void)ftn::fetch_mnist(server.base(), dir.string(), bad),
        doctest::Contains("digest mismatch"), ftn::data_error);
    CHECK_FALSE(fs::exists(dir / bad[2].name));
    CHECK(fs::exists(dir / (bad[2].name + ".quarantine")));
  }

  SUBCASE("size mismatch quarantines the download") {
    auto bad = c.manifest;
    bad[0].size += 1;
    fs::path dir = fresh_dir("ftn_test_fetch_size");
    CHECK_THROWS_WITH_AS(
        (void)ftn::fetch_mnist(server.base(), dir.string(), bad),
        doctest::Contains("size mismatch"), ftn::data_error);
    CHECK(fs::exists(dir / (bad[0].name + ".quarantine")));
  }

  SUBCASE("missing remote file surfaces the HTTP status") {
    auto bad = c.manifest;
    bad[3].name = "no-such-file.gz";
    fs::path dir = fresh_dir("ftn_test_fetch_404");
    CHECK_THROWS_WITH_AS(
        (void)ftn::fetch_mnist(server.base(), dir.string(), bad),
        doctest::Contains("HTTP 404"), ftn::data_error);
  }
}

TEST_CASE("fetch validates the url and reports unreachable hosts") {
  Corpus c = make_corpus();
  fs::path dir = fresh_dir("ftn_test_fetch_url");
  CHECK_THROWS_AS(
      (void)ftn::fetch_mnist("ftp://example.com/x", dir.string(), c.manifest),
      ftn::config_error);
  // Nothing listens on port 9; connection errors surface as data_error.
  CHECK_THROWS_WITH_AS(
      (void)ftn::fetch_mnist("http://127.0.0.1:9/files", dir.string(),
                             c.manifest),
      doctest::Contains("fetch failed"), ftn::data_error);
}
