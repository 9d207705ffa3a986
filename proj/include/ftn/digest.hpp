#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ftn {

// Incremental SHA-256 (OpenSSL EVP underneath). Used for parameter
// fingerprints, data-file integrity checks, and run-record digests.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len);
  void update(std::span<const double> values) {
    update(values.data(), values.size() * sizeof(double));
  }
  void update(const std::string& s) { update(s.data(), s.size()); }

  // Finalizes and returns lowercase hex; the object must not be reused.
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

}  // namespace ftn
