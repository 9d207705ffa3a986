#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ftn/errors.hpp"
#include "ftn/tasks.hpp"

namespace ftn {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open " + path);
  f.seekg(0, std::ios::end);
  auto n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!f) throw data_error("short read on " + path);
  return bytes;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in,
                                 const std::string& path) {
  z_stream strm{};
  // 15 + 32: accept both zlib and gzip wrappers.
  if (inflateInit2(&strm, 15 + 32) != Z_OK) {
    throw data_error(path + ": cannot initialize decompressor");
  }
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  strm.next_in = const_cast<Bytef*>(in.data());
  strm.avail_in = uInt(in.size());
  int rc = Z_OK;
  do {
    strm.next_out = chunk.data();
    strm.avail_out = uInt(chunk.size());
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw data_error(path + ": corrupt gzip stream");
    }
    out.insert(out.end(), chunk.data(),
               chunk.data() + (chunk.size() - strm.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&strm);
  return out;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
    return gunzip(bytes, path);
  }
  return bytes;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off,
                   const std::string& path) {
  if (off + 4 > b.size()) {
    throw data_error(path + ": truncated header at offset " +
                     std::to_string(off));
  }
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> load_idx_images(const std::string& path,
                                          int& count) {
  auto b = read_maybe_gzip(path);
  std::uint32_t magic = be32(b, 0, path);
  if (magic != 0x00000803u) {
    throw data_error(path + ": bad magic " + hex32(magic) +
                     " at offset 0, expected 0x00000803");
  }
  std::uint32_t n = be32(b, 4, path);
  std::uint32_t rows = be32(b, 8, path);
  std::uint32_t cols = be32(b, 12, path);
  if (rows != kImageSide || cols != kImageSide) {
    throw data_error(path + ": unexpected image dims " + std::to_string(rows) +
                     "x" + std::to_string(cols) + " at offset 8");
  }
  const std::size_t want = 16 + std::size_t(n) * kImageDim;
  if (b.size() != want) {
    throw data_error(path + ": expected " + std::to_string(want) +
                     " bytes, got " + std::to_string(b.size()) +
                     " (divergence at offset " +
                     std::to_string(std::min(b.size(), want)) + ")");
  }
  count = int(n);
  return {b.begin() + 16, b.end()};
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path,
                                          int& count) {
  auto b = read_maybe_gzip(path);
  std::uint32_t magic = be32(b, 0, path);
  if (magic != 0x00000801u) {
    throw data_error(path + ": bad magic " + hex32(magic) +
                     " at offset 0, expected 0x00000801");
  }
  std::uint32_t n = be32(b, 4, path);
  const std::size_t want = 8 + std::size_t(n);
  if (b.size() != want) {
    throw data_error(path + ": expected " + std::to_string(want) +
                     " bytes, got " + std::to_string(b.size()) +
                     " (divergence at offset " +
                     std::to_string(std::min(b.size(), want)) + ")");
  }
  for (std::size_t i = 8; i < b.size(); ++i) {
    if (b[i] >= kNumClasses) {
      throw data_error(path + ": label " + std::to_string(int(b[i])) +
                       " out of range at offset " + std::to_string(i));
    }
  }
  count = int(n);
  return {b.begin() + 8, b.end()};
}

namespace {

std::string resolve(const std::string& dir, const std::string& name) {
  namespace fs = std::filesystem;
  std::string plain = dir + "/" + name;
  if (fs::exists(plain)) return plain;
  std::string gz = plain + ".gz";
  if (fs::exists(gz)) return gz;
  throw data_error("missing " + plain + "[.gz]; run fetch-data first");
}

}  // namespace

MnistData load_mnist(const std::string& dir, bool require_full) {
  MnistData d;
  int n_ti = 0, n_tl = 0, n_vi = 0, n_vl = 0;
  d.train_images = load_idx_images(resolve(dir, "train-images-idx3-ubyte"),
                                   n_ti);
  d.train_labels = load_idx_labels(resolve(dir, "train-labels-idx1-ubyte"),
                                   n_tl);
  d.test_images = load_idx_images(resolve(dir, "t10k-images-idx3-ubyte"),
                                  n_vi);
  d.test_labels = load_idx_labels(resolve(dir, "t10k-labels-idx1-ubyte"),
                                  n_vl);
  if (n_ti != n_tl) {
    throw data_error(dir + ": train image count " + std::to_string(n_ti) +
                     " != label count " + std::to_string(n_tl));
  }
  if (n_vi != n_vl) {
    throw data_error(dir + ": test image count " + std::to_string(n_vi) +
                     " != label count " + std::to_string(n_vl));
  }
  if (require_full && (n_ti != 60000 || n_vi != 10000)) {
    throw data_error(dir + ": expected the full 60000/10000 split, got " +
                     std::to_string(n_ti) + "/" + std::to_string(n_vi));
  }
  return d;
}

const std::vector<RemoteFile>& mnist_manifest() {
  static const std::vector<RemoteFile> manifest = {
      {"train-images-idx3-ubyte.gz", 9912422,
       "440fcabf73cc546fa21475e81ea370265605f56be210a4024d2ca8f203523609"},
      {"train-labels-idx1-ubyte.gz", 28881,
       "3552534a0a558bbed6aed32b30c495cca23d567ec52cac8be1a0730e8010255c"},
      {"t10k-images-idx3-ubyte.gz", 1648877,
       "8d422c7b0a1c1c79245a5bcf07fe86e33eeafee792b84584aec276f5a2dbc4e6"},
      {"t10k-labels-idx1-ubyte.gz", 4542,
       "f7ae60f92e00ec6debd23a6088c31dbd2371eca3ffa0defaefb259924204aec6"},
  };
  return manifest;
}

}  // namespace ftn
