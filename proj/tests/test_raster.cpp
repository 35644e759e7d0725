#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "npp/raster.hpp"
#include "npp/rng.hpp"

using namespace npp;

namespace {

std::string tmp_path(const char* name) { return std::string("raster_test_") + name; }

RasterImage random_image(int w, int h, int c, uint64_t seed) {
  RasterImage img(w, h, c);
  Rng rng(seed);
  for (double& v : img.data) v = double(rng.index(256)) / 255.0;
  return img;
}

double mean(const RasterImage& img) {
  double s = 0.0;
  for (double v : img.data) s += v;
  return s / double(img.data.size());
}

}  // namespace

TEST_CASE("PGM quantization levels decode exactly") {
  const std::string path = tmp_path("levels.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 2\n255\n";
    const unsigned char bytes[4] = {0, 255, 128, 64};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  const RasterImage img = load_image(path);
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 2);
  REQUIRE(img.channels == 1);
  CHECK(img.at(0, 0) == 0.0);
  CHECK(img.at(1, 0) == 1.0);
  CHECK(img.at(0, 1) == 128.0 / 255.0);
  CHECK(img.at(1, 1) == 64.0 / 255.0);
  std::remove(path.c_str());
}

TEST_CASE("PGM, PPM and PNG round trips are exact at 8 bits") {
  const RasterImage gray = random_image(7, 5, 1, 11);
  const RasterImage rgb = random_image(6, 9, 3, 12);

  for (const char* ext : {"pgm", "png"}) {
    const std::string path = tmp_path("gray.") + ext;
    save_image(gray, path);
    const RasterImage back = load_image(path);
    REQUIRE(back.channels == 1);
    CHECK(back.data == gray.data);
    std::remove(path.c_str());
  }
  for (const char* ext : {"ppm", "png"}) {
    const std::string path = tmp_path("rgb.") + ext;
    save_image(rgb, path);
    const RasterImage back = load_image(path);
    REQUIRE(back.channels == 3);
    CHECK(back.data == rgb.data);
    std::remove(path.c_str());
  }
}

TEST_CASE("truncated and mismatched files throw") {
  const std::string path = tmp_path("short.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n4 4\n255\n";
    out.write("ab", 2);
  }
  CHECK_THROWS_AS(load_image(path), std::runtime_error);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_image("does_not_exist.png"), std::runtime_error);
  CHECK_THROWS_AS(save_image(RasterImage(2, 2, 3), tmp_path("bad.pgm")), std::invalid_argument);
}

TEST_CASE("mask round trip uses the 128 threshold") {
  const std::string path = tmp_path("mask.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 2\n255\n";
    const unsigned char bytes[4] = {127, 128, 0, 255};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  const KnownMask m = load_mask(path);
  CHECK(!m.at(0, 0));
  CHECK(m.at(1, 0));
  CHECK(!m.at(0, 1));
  CHECK(m.at(1, 1));
  CHECK(m.count() == 2);

  save_mask(m, path);
  const KnownMask back = load_mask(path);
  CHECK(back.flags == m.flags);
  std::remove(path.c_str());
}

TEST_CASE("grayscale conversion uses BT.601 weights") {
  RasterImage rgb(1, 1, 3);
  rgb.data = {1.0, 0.5, 0.25};
  const RasterImage g = to_grayscale(rgb);
  CHECK(g.data[0] == doctest::Approx(0.299 + 0.587 * 0.5 + 0.114 * 0.25));
  const RasterImage same = to_grayscale(g);
  CHECK(same.data == g.data);
}

TEST_CASE("blur is identity at sigma zero and preserves constants") {
  const RasterImage img = random_image(16, 12, 3, 21);
  CHECK(gaussian_blur(img, 0.0).data == img.data);

  RasterImage flat(9, 9, 1);
  for (double& v : flat.data) v = 0.42;
  const RasterImage b = gaussian_blur(flat, 2.0);
  for (double v : b.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("blur preserves the image mean") {
  const RasterImage img = random_image(23, 17, 1, 5);
  const RasterImage b = gaussian_blur(img, 1.5);
  CHECK(mean(b) == doctest::Approx(mean(img)).epsilon(1e-9));
}

TEST_CASE("blur operator is self-adjoint") {
  const int w = 13, h = 11;
  const RasterImage u = random_image(w, h, 1, 31);
  const RasterImage v = random_image(w, h, 1, 32);
  const RasterImage bu = gaussian_blur(u, 1.2);
  const RasterImage bv = gaussian_blur(v, 1.2);
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < u.data.size(); ++i) {
    lhs += bu.data[i] * v.data[i];
    rhs += u.data[i] * bv.data[i];
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("interior impulse response is the separable kernel") {
  const double sigma = 1.0;
  const auto k = gaussian_kernel(sigma);
  const int r = int(k.size() / 2);
  const int n = 4 * r + 9;
  RasterImage img(n, n, 1);
  const int c = n / 2;
  img.at(c, c) = 1.0;
  const RasterImage b = gaussian_blur(img, sigma);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      CHECK(b.at(c + dx, c + dy) ==
            doctest::Approx(k[size_t(dx + r)] * k[size_t(dy + r)]).epsilon(1e-12));
}

TEST_CASE("distance transform matches brute force with invalid borders") {
  const int w = 17, h = 13;
  KnownMask valid(w, h, true);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) valid.set(int(rng.index(w)), int(rng.index(h)), false);

  const std::vector<double> dist = distance_to_invalid(valid);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = std::min(std::min(x + 1, y + 1), std::min(w - x, h - y));
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
          if (!valid.at(xx, yy)) best = std::min(best, std::hypot(x - xx, y - yy));
      CHECK(dist[size_t(y) * w + x] == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("distance transform is zero on invalid pixels") {
  KnownMask valid(8, 8, true);
  valid.set(3, 4, false);
  const auto dist = distance_to_invalid(valid);
  CHECK(dist[4 * 8 + 3] == 0.0);
  CHECK(dist[0] == 1.0);  // corner is one step from the outside
}
