#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ftn {

// Binary netpbm images (P5 grayscale, P6 RGB), maxval fixed at 255.
// Writers emit the canonical header "Pn\n<w> <h>\n255\n" + raw payload;
// parsers accept any whitespace/comment layout the format allows, so
// write -> parse -> write is byte-identical.

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width*height
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3*width*height
};

std::string pgm_bytes(const GrayImage& img);
std::string ppm_bytes(const RgbImage& img);
GrayImage parse_pgm(const std::string& bytes, const std::string& origin);
RgbImage parse_ppm(const std::string& bytes, const std::string& origin);

void write_pgm(const GrayImage& img, const std::string& path);
void write_ppm(const RgbImage& img, const std::string& path);
GrayImage read_pgm(const std::string& path);  // data_error on damage
RgbImage read_ppm(const std::string& path);

// One task mask as a side x side image: active gates white (255),
// inactive black. gates must hold side^2 entries.
GrayImage mask_image(std::span<const double> gates, int side);

// Back to a binary gate vector: nonzero pixels open the gate.
std::vector<double> gates_from_image(const GrayImage& img);

// Fixed 8-color palette for task overlays; tasks beyond the palette reuse
// colors cyclically (the CLI warns when that happens).
std::size_t palette_size();
std::array<std::uint8_t, 3> task_color(int task);

// All task masks of one run composited on black: task t adds its palette
// color wherever its gate is open, channelwise with saturation at 255.
RgbImage overlay_masks(const std::vector<std::vector<double>>& gate_sets,
                       int side);

// Flat text form: side rows of side 0/1 digits, space-separated. The
// parser accepts any whitespace layout with exactly side^2 binary digits.
std::string mask_text(std::span<const double> gates, int side);
std::vector<double> parse_mask_text(const std::string& text, int side,
                                    const std::string& origin);

}  // namespace ftn
