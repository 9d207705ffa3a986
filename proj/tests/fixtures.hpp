#pragma once

// Dataset fixtures: a synthetic 28x28 "glyph" corpus with ten visually
// distinct classes (MNIST-shaped, generated in memory) and raw IDX/gzip
// byte builders for parser and fetch tests.

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftn/rng.hpp"
#include "ftn/tasks.hpp"

namespace testutil {

// Class c draws a horizontal band whose row depends on c mod 5 and a
// vertical band whose column depends on c / 5, over low-amplitude noise;
// trivially learnable, nontrivially so after pixel permutation.
inline ftn::MnistData make_glyph_data(int n_train, int n_test,
                                      std::uint64_t seed) {
  ftn::MnistData d;
  ftn::RngStream rng(seed, ftn::StreamPurpose::init, 77);
  auto fill = [&](std::vector<std::uint8_t>& images,
                  std::vector<std::uint8_t>& labels, int n) {
    images.resize(std::size_t(n) * ftn::kImageDim);
    labels.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
      int c = i % 10;
      labels[std::size_t(i)] = std::uint8_t(c);
      std::uint8_t* img = images.data() + std::size_t(i) * ftn::kImageDim;
      for (int j = 0; j < ftn::kImageDim; ++j) {
        img[j] = std::uint8_t(rng.below(40));
      }
      int r0 = (c % 5) * 5 + 2;
      int c0 = (c / 5) * 12 + 4;
      for (int r = r0; r < r0 + 3; ++r) {
        for (int col = 0; col < ftn::kImageSide; ++col) {
          img[r * ftn::kImageSide + col] = 230;
        }
      }
      for (int col = c0; col < c0 + 4; ++col) {
        for (int r = 0; r < ftn::kImageSide; ++r) {
          img[r * ftn::kImageSide + col] = 180;
        }
      }
    }
  };
  fill(d.train_images, d.train_labels, n_train);
  fill(d.test_images, d.test_labels, n_test);
  return d;
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

inline std::vector<std::uint8_t> idx_image_bytes(
    const std::vector<std::uint8_t>& pixels, int count) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000803u);
  put_be32(out, std::uint32_t(count));
  put_be32(out, 28);
  put_be32(out, 28);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

inline std::vector<std::uint8_t> idx_label_bytes(
    const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000801u);
  put_be32(out, std::uint32_t(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

inline std::vector<std::uint8_t> gzip_bytes(
    const std::vector<std::uint8_t>& in) {
  z_stream strm{};
  if (deflateInit2(&strm, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK) {
    throw std::runtime_error("deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&strm, uLong(in.size())));
  strm.next_in = const_cast<Bytef*>(in.data());
  strm.avail_in = uInt(in.size());
  strm.next_out = out.data();
  strm.avail_out = uInt(out.size());
  if (deflate(&strm, Z_FINISH) != Z_STREAM_END) {
    deflateEnd(&strm);
    throw std::runtime_error("deflate failed");
  }
  out.resize(out.size() - strm.avail_out);
  deflateEnd(&strm);
  return out;
}

inline void write_bytes(const std::string& path,
                        const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("cannot write " + path);
}

// Writes a full glyph corpus to `dir` in the standard four-file layout,
// images gzipped, labels plain, and returns the generated data.
inline ftn::MnistData write_glyph_corpus(const std::string& dir, int n_train,
                                         int n_test, std::uint64_t seed) {
  ftn::MnistData d = make_glyph_data(n_train, n_test, seed);
  write_bytes(dir + "/train-images-idx3-ubyte.gz",
              gzip_bytes(idx_image_bytes(d.train_images, n_train)));
  write_bytes(dir + "/train-labels-idx1-ubyte",
              idx_label_bytes(d.train_labels));
  write_bytes(dir + "/t10k-images-idx3-ubyte.gz",
              gzip_bytes(idx_image_bytes(d.test_images, n_test)));
  write_bytes(dir + "/t10k-labels-idx1-ubyte", idx_label_bytes(d.test_labels));
  return d;
}

}  // namespace testutil
