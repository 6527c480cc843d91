#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace avicurate {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, Rgb fill = {});

  Rgb at(int x, int y) const {
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
  }
};

void fill_rect(Image& img, int x, int y, int w, int h, Rgb c);

// Copies src into dst with its top-left corner at (x, y), clipped to dst.
void blit(Image& dst, const Image& src, int x, int y);

// 5x7 bitmap glyphs, one column of spacing, `scale` pixels per dot.
// Lowercase draws as uppercase; characters without a glyph draw as '?'.
int text_width(std::string_view text, int scale);
int text_height(int scale);
void draw_text(Image& img, int x, int y, std::string_view text, int scale, Rgb c);

// Perceptually ordered dark-blue -> green -> yellow ramp, t in [0, 1].
Rgb colormap(double t);

// Rows are frequency bins (row 0 lowest), columns are frames. Values map
// through dB with `range_db` of headroom below the maximum.
Image render_power(const Eigen::Ref<const Eigen::MatrixXd>& power, int width, int height, double range_db = 80.0);

std::string encode_png(const Image& img);
Image decode_png(std::string_view bytes);
void write_png(const Image& img, const std::filesystem::path& path);

}  // namespace avicurate
