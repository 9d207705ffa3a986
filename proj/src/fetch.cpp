#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <filesystem>
#include <fstream>

#include "ftn/digest.hpp"
#include "ftn/errors.hpp"
#include "ftn/tasks.hpp"

namespace ftn {

namespace {

namespace fs = std::filesystem;

// "http(s)://host[:port]/prefix" -> (origin, prefix)
std::pair<std::string, std::string> split_url(const std::string& url) {
  if (!url.starts_with("http://") && !url.starts_with("https://")) {
    throw config_error("fetch: url must start with http:// or https://: " +
                       url);
  }
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

void quarantine(const fs::path& p) {
  fs::path q = p;
  q += ".quarantine";
  std::error_code ec;
  fs::remove(q, ec);
  fs::rename(p, q, ec);
  if (ec) fs::remove(p, ec);  // fall back to deleting the bad file
}

}  // namespace

std::vector<std::string> fetch_mnist(const std::string& url_base,
                                     const std::string& dest_dir,
                                     const std::vector<RemoteFile>& manifest) {
  fs::create_directories(dest_dir);
  auto [origin, prefix] = split_url(url_base);

  std::vector<std::string> paths;
  for (const auto& file : manifest) {
    fs::path dest = fs::path(dest_dir) / file.name;
    if (fs::exists(dest)) {
      if (sha256_file_hex(dest.string()) == file.sha256) {
        paths.push_back(dest.string());
        continue;  // verified; no traffic
      }
      quarantine(dest);
    }

    const std::string url = origin + prefix + "/" + file.name;
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    auto res = client.Get(prefix + "/" + file.name);
    if (!res) {
      throw data_error("fetch failed: " + url + " (" +
                       httplib::to_string(res.error()) + ")");
    }
    if (res->status != 200) {
      throw data_error("fetch failed: " + url + " (HTTP " +
                       std::to_string(res->status) + ")");
    }
    {
      std::ofstream out(dest, std::ios::binary | std::ios::trunc);
      if (!out) throw data_error("cannot write " + dest.string());
      out.write(res->body.data(), std::streamsize(res->body.size()));
      if (!out) throw data_error("short write on " + dest.string());
    }
    if (res->body.size() != file.size) {
      quarantine(dest);
      throw data_error("size mismatch for " + url + ": expected " +
                       std::to_string(file.size) + ", got " +
                       std::to_string(res->body.size()) +
                       "; file quarantined");
    }
    std::string digest = sha256_hex(res->body);
    if (digest != file.sha256) {
      quarantine(dest);
      throw data_error("digest mismatch for " + url + ": expected " +
                       file.sha256 + ", got " + digest +
                       "; file quarantined");
    }
    paths.push_back(dest.string());
  }
  return paths;
}

}  // namespace ftn
