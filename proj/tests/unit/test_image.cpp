#include <doctest.h>

#include "avicurate/error.hpp"
#include "avicurate/image.hpp"
#include "avicurate/rng.hpp"

using namespace avicurate;

TEST_CASE("PNG round trip is lossless") {
  Image img(37, 11);
  Rng rng = make_rng(5);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
  const Image back = decode_png(encode_png(img));
  CHECK(back.width == 37);
  CHECK(back.height == 11);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("PNG errors") {
  CHECK_THROWS_AS(decode_png("not a png"), Error);
  std::string bytes = encode_png(Image(8, 8, {1, 2, 3}));
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_png(bytes), Error);
  CHECK_THROWS_AS(encode_png(Image{}), Error);
}

TEST_CASE("fill_rect and blit clip to the canvas") {
  Image img(10, 10);
  fill_rect(img, -3, -3, 5, 5, {255, 0, 0});
  CHECK(img.at(0, 0) == Rgb{255, 0, 0});
  CHECK(img.at(1, 1) == Rgb{255, 0, 0});
  CHECK(img.at(2, 2) == Rgb{0, 0, 0});

  Image tile(4, 4, {0, 255, 0});
  blit(img, tile, 8, 8);
  CHECK(img.at(9, 9) == Rgb{0, 255, 0});
  CHECK(img.at(7, 7) == Rgb{0, 0, 0});
  blit(img, tile, -2, 5);
  CHECK(img.at(0, 5) == Rgb{0, 255, 0});
  CHECK(img.at(2, 5) == Rgb{0, 0, 0});
}

TEST_CASE("text metrics and rendering") {
  CHECK(text_width("", 4) == 0);
  CHECK(text_width("XC1", 1) == 17);
  CHECK(text_width("XC1", 4) == 68);
  CHECK(text_height(4) == 28);

  Image img(40, 10);
  draw_text(img, 1, 1, "l", 1, {255, 255, 255});
  Image upper(40, 10);
  draw_text(upper, 1, 1, "L", 1, {255, 255, 255});
  CHECK(img.pixels == upper.pixels);
  // "L" is a full left column plus a bottom bar: 7 + 4 lit dots.
  int lit = 0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 40; ++x) lit += img.at(x, y).r == 255;
  CHECK(lit == 11);
}

TEST_CASE("colormap endpoints and monotone brightness") {
  CHECK(colormap(0.0) == Rgb{68, 1, 84});
  CHECK(colormap(1.0) == Rgb{253, 231, 37});
  CHECK(colormap(-1.0) == colormap(0.0));
  CHECK(colormap(2.0) == colormap(1.0));
  auto luma = [](Rgb c) { return 0.2126 * c.r + 0.7152 * c.g + 0.0722 * c.b; };
  double prev = -1;
  for (int i = 0; i <= 100; ++i) {
    const double l = luma(colormap(i / 100.0));
    CHECK(l >= prev - 1.0);
    prev = l;
  }
}

TEST_CASE("render_power puts low bins at the bottom") {
  Eigen::MatrixXd power = Eigen::MatrixXd::Constant(4, 3, 1e-12);
  power(0, 1) = 1.0;  // lowest bin, middle frame
  const Image img = render_power(power, 30, 40);
  CHECK(img.at(15, 39) == colormap(1.0));
  CHECK(img.at(15, 0) == colormap(0.0));
  CHECK(img.at(2, 39) == colormap(0.0));
}
