#include "ftn/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ftn/errors.hpp"

namespace ftn {

namespace {

void check_dims(int width, int height, std::size_t have, int channels,
                const char* what) {
  if (width < 1 || height < 1) {
    throw config_error(std::string(what) + ": dimensions must be positive");
  }
  std::size_t want = std::size_t(width) * height * channels;
  if (have != want) {
    throw config_error(std::string(what) + ": pixel buffer has " +
                       std::to_string(have) + " bytes, expected " +
                       std::to_string(want));
  }
}

std::string header(const char* magic, int width, int height) {
  std::ostringstream out;
  out << magic << "\n" << width << " " << height << "\n255\n";
  return out.str();
}

// Reads the next decimal token, skipping whitespace and '#' comments.
int read_token(const std::string& bytes, std::size_t& pos,
               const std::string& origin) {
  for (;;) {
    while (pos < bytes.size() &&
           std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size() ||
      !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    throw data_error(origin + ": malformed netpbm header");
  }
  long v = 0;
  while (pos < bytes.size() &&
         std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > 1 << 20) throw data_error(origin + ": header value too large");
    ++pos;
  }
  return int(v);
}

std::vector<std::uint8_t> parse_pnm(const std::string& bytes,
                                    const std::string& origin,
                                    const char* magic, int channels,
                                    int& width, int& height) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw data_error(origin + ": not a " + magic + " file");
  }
  std::size_t pos = 2;
  width = read_token(bytes, pos, origin);
  height = read_token(bytes, pos, origin);
  int maxval = read_token(bytes, pos, origin);
  if (width < 1 || height < 1) {
    throw data_error(origin + ": bad image dimensions");
  }
  if (maxval != 255) {
    throw data_error(origin + ": only maxval 255 is supported, got " +
                     std::to_string(maxval));
  }
  // Exactly one whitespace byte separates the header from the payload.
  if (pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw data_error(origin + ": malformed netpbm header");
  }
  ++pos;
  std::size_t want = std::size_t(width) * height * channels;
  if (bytes.size() - pos < want) {
    throw data_error(origin + ": truncated pixel payload (" +
                     std::to_string(bytes.size() - pos) + " of " +
                     std::to_string(want) + " bytes)");
  }
  if (bytes.size() - pos > want) {
    throw data_error(origin + ": trailing bytes after pixel payload");
  }
  return std::vector<std::uint8_t>(bytes.begin() + std::ptrdiff_t(pos),
                                   bytes.end());
}

std::string slurp_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open image " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("cannot write image " + path);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw data_error("short write on image " + path);
}

}  // namespace

std::string pgm_bytes(const GrayImage& img) {
  check_dims(img.width, img.height, img.pixels.size(), 1, "pgm");
  std::string out = header("P5", img.width, img.height);
  out.append(reinterpret_cast<const char*>(img.pixels.data()),
             img.pixels.size());
  return out;
}

std::string ppm_bytes(const RgbImage& img) {
  check_dims(img.width, img.height, img.pixels.size(), 3, "ppm");
  std::string out = header("P6", img.width, img.height);
  out.append(reinterpret_cast<const char*>(img.pixels.data()),
             img.pixels.size());
  return out;
}

GrayImage parse_pgm(const std::string& bytes, const std::string& origin) {
  GrayImage img;
  img.pixels = parse_pnm(bytes, origin, "P5", 1, img.width, img.height);
  return img;
}

RgbImage parse_ppm(const std::string& bytes, const std::string& origin) {
  RgbImage img;
  img.pixels = parse_pnm(bytes, origin, "P6", 3, img.width, img.height);
  return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
  spit_file(path, pgm_bytes(img));
}

void write_ppm(const RgbImage& img, const std::string& path) {
  spit_file(path, ppm_bytes(img));
}

GrayImage read_pgm(const std::string& path) {
  return parse_pgm(slurp_file(path), path);
}

RgbImage read_ppm(const std::string& path) {
  return parse_ppm(slurp_file(path), path);
}

GrayImage mask_image(std::span<const double> gates, int side) {
  if (side < 1 || gates.size() != std::size_t(side) * side) {
    throw config_error("mask image: gates do not fill a " +
                       std::to_string(side) + "x" + std::to_string(side) +
                       " grid");
  }
  GrayImage img;
  img.width = side;
  img.height = side;
  img.pixels.resize(gates.size());
  for (std::size_t i = 0; i < gates.size(); ++i) {
    img.pixels[i] = gates[i] != 0.0 ? 255 : 0;
  }
  return img;
}

std::vector<double> gates_from_image(const GrayImage& img) {
  std::vector<double> gates(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    gates[i] = img.pixels[i] != 0 ? 1.0 : 0.0;
  }
  return gates;
}

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{
    {230, 25, 75},    // red
    {60, 180, 75},    // green
    {0, 130, 200},    // blue
    {255, 225, 25},   // yellow
    {145, 30, 180},   // purple
    {70, 240, 240},   // cyan
    {245, 130, 48},   // orange
    {240, 50, 230},   // magenta
}};

}  // namespace

std::size_t palette_size() { return kPalette.size(); }

std::array<std::uint8_t, 3> task_color(int task) {
  if (task < 0) throw config_error("task color: negative task index");
  return kPalette[std::size_t(task) % kPalette.size()];
}

RgbImage overlay_masks(const std::vector<std::vector<double>>& gate_sets,
                       int side) {
  if (gate_sets.empty()) {
    throw config_error("overlay: need at least one mask");
  }
  RgbImage img;
  img.width = side;
  img.height = side;
  img.pixels.assign(std::size_t(side) * side * 3, 0);
  for (std::size_t t = 0; t < gate_sets.size(); ++t) {
    const auto& gates = gate_sets[t];
    if (gates.size() != std::size_t(side) * side) {
      throw config_error("overlay: mask " + std::to_string(t) +
                         " does not fill the grid");
    }
    auto color = task_color(int(t));
    for (std::size_t i = 0; i < gates.size(); ++i) {
      if (gates[i] == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        int v = img.pixels[i * 3 + std::size_t(c)] + color[std::size_t(c)];
        img.pixels[i * 3 + std::size_t(c)] =
            std::uint8_t(std::min(v, 255));
      }
    }
  }
  return img;
}

std::string mask_text(std::span<const double> gates, int side) {
  if (side < 1 || gates.size() != std::size_t(side) * side) {
    throw config_error("mask text: gates do not fill the grid");
  }
  std::string out;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      if (c) out += ' ';
      out += gates[std::size_t(r) * side + c] != 0.0 ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

std::vector<double> parse_mask_text(const std::string& text, int side,
                                    const std::string& origin) {
  std::vector<double> gates;
  gates.reserve(std::size_t(side) * side);
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    if (ch == '0') {
      gates.push_back(0.0);
    } else if (ch == '1') {
      gates.push_back(1.0);
    } else {
      throw data_error(origin + ": mask text may contain only 0 and 1");
    }
  }
  if (gates.size() != std::size_t(side) * side) {
    throw data_error(origin + ": mask text has " +
                     std::to_string(gates.size()) + " entries, expected " +
                     std::to_string(std::size_t(side) * side));
  }
  return gates;
}

}  // namespace ftn
