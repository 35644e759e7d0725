#include "npp/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace npp {

size_t KnownMask::count() const {
  size_t n = 0;
  for (uint8_t f : flags) n += f != 0;
  return n;
}

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

RasterImage from_bytes(int w, int h, int c, const std::vector<uint8_t>& bytes) {
  RasterImage img(w, h, c);
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

std::vector<uint8_t> to_bytes(const RasterImage& img) {
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    double v = std::clamp(img.data[i], 0.0, 1.0);
    bytes[i] = uint8_t(std::lround(v * 255.0));
  }
  return bytes;
}

RasterImage load_png(const std::string& path) {
  png_image pim;
  std::memset(&pim, 0, sizeof pim);
  pim.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pim, path.c_str())) fail("unreadable PNG", path);
  if (pim.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&pim);
    fail("unsupported PNG bit depth", path);
  }
  const bool color = pim.format & PNG_FORMAT_FLAG_COLOR;
  pim.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<uint8_t> bytes(PNG_IMAGE_SIZE(pim));
  if (!png_image_finish_read(&pim, nullptr, bytes.data(), 0, nullptr)) fail("unreadable PNG", path);
  return from_bytes(int(pim.width), int(pim.height), color ? 3 : 1, bytes);
}

void save_png(const RasterImage& img, const std::string& path) {
  png_image pim;
  std::memset(&pim, 0, sizeof pim);
  pim.version = PNG_IMAGE_VERSION;
  pim.width = png_uint_32(img.width);
  pim.height = png_uint_32(img.height);
  pim.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  auto bytes = to_bytes(img);
  if (!png_image_write_to_file(&pim, path.c_str(), 0, bytes.data(), 0, nullptr))
    fail("cannot write PNG", path);
}

// One whitespace/comment-delimited header token of a PNM file.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      tok.push_back(char(ch));
      while ((ch = in.peek()) != EOF && !std::isspace(ch) && ch != '#') tok.push_back(char(in.get()));
      return tok;
    }
  }
  return tok;
}

RasterImage load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("unreadable file", path);
  const std::string magic = pnm_token(in);
  int channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    fail("not a binary PGM/PPM", path);
  const std::string ws = pnm_token(in), hs = pnm_token(in), ms = pnm_token(in);
  if (ws.empty() || hs.empty() || ms.empty()) fail("truncated PNM header", path);
  const int w = std::stoi(ws), h = std::stoi(hs), maxval = std::stoi(ms);
  if (w <= 0 || h <= 0) fail("bad PNM dimensions", path);
  if (maxval != 255) fail("unsupported PNM bit depth", path);
  in.get();  // the single whitespace byte before raster data
  std::vector<uint8_t> bytes(size_t(w) * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (size_t(in.gcount()) != bytes.size()) fail("truncated PNM data", path);
  return from_bytes(w, h, channels, bytes);
}

void save_pnm(const RasterImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write file", path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  auto bytes = to_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) fail("cannot write file", path);
}

bool has_suffix(const std::string& s, const char* suf) {
  const size_t n = std::strlen(suf);
  if (s.size() < n) return false;
  std::string tail = s.substr(s.size() - n);
  std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return tail == suf;
}

}  // namespace

RasterImage load_image(const std::string& path) {
  if (has_suffix(path, ".png")) return load_png(path);
  if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm")) return load_pnm(path);
  fail("unsupported image format", path);
}

void save_image(const RasterImage& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("image must have 1 or 3 channels");
  if (has_suffix(path, ".png")) return save_png(img, path);
  if (has_suffix(path, ".pgm")) {
    if (img.channels != 1) throw std::invalid_argument("PGM holds a single channel");
    return save_pnm(img, path);
  }
  if (has_suffix(path, ".ppm")) {
    if (img.channels != 3) throw std::invalid_argument("PPM holds three channels");
    return save_pnm(img, path);
  }
  fail("unsupported image format", path);
}

KnownMask load_mask(const std::string& path) {
  RasterImage img = load_image(path);
  if (img.channels != 1) img = to_grayscale(img);
  KnownMask mask(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) mask.flags[i] = img.data[i] >= 128.0 / 255.0 ? 1 : 0;
  return mask;
}

void save_mask(const KnownMask& mask, const std::string& path) {
  RasterImage img(mask.width, mask.height, 1);
  for (size_t i = 0; i < mask.flags.size(); ++i) img.data[i] = mask.flags[i] ? 1.0 : 0.0;
  save_image(img, path);
}

RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw std::invalid_argument("image must have 1 or 3 channels");
  RasterImage out(img.width, img.height, 1);
  for (size_t p = 0; p < img.pixels(); ++p)
    out.data[p] = 0.299 * img.data[3 * p] + 0.587 * img.data[3 * p + 1] + 0.114 * img.data[3 * p + 2];
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int r = int(std::ceil(3.0 * sigma));
  std::vector<double> k(size_t(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[size_t(i + r)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

void blur_line(const double* in, double* out, int n, const std::vector<double>& kernel, int stride) {
  const int r = int(kernel.size() / 2);
  const int period = 2 * n;
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int t = -r; t <= r; ++t) {
      int m = (i + t) % period;
      if (m < 0) m += period;
      if (m >= n) m = period - 1 - m;  // symmetric reflection, edge included
      acc += kernel[size_t(t + r)] * in[size_t(m) * stride];
    }
    out[size_t(i) * stride] = acc;
  }
}

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("negative blur sigma");
  if (sigma == 0.0) return img;
  const auto kernel = gaussian_kernel(sigma);
  RasterImage tmp = img, out = img;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      blur_line(img.data.data() + (size_t(y) * img.width) * img.channels + c,
                tmp.data.data() + (size_t(y) * img.width) * img.channels + c, img.width, kernel,
                img.channels);
    for (int x = 0; x < img.width; ++x)
      blur_line(tmp.data.data() + size_t(x) * img.channels + c,
                out.data.data() + size_t(x) * img.channels + c, img.height, kernel,
                img.width * img.channels);
  }
  return out;
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope over squared distances.
void dt_1d(const std::vector<double>& f, std::vector<double>& d, int n, std::vector<int>& v,
           std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -1e30;
  z[1] = 1e30;
  for (int q = 1; q < n; ++q) {
    double s = ((f[size_t(q)] + q * q) - (f[size_t(v[size_t(k)])] + v[size_t(k)] * v[size_t(k)])) /
               (2.0 * q - 2.0 * v[size_t(k)]);
    while (s <= z[size_t(k)]) {
      --k;
      s = ((f[size_t(q)] + q * q) - (f[size_t(v[size_t(k)])] + v[size_t(k)] * v[size_t(k)])) /
          (2.0 * q - 2.0 * v[size_t(k)]);
    }
    ++k;
    v[size_t(k)] = q;
    z[size_t(k)] = s;
    z[size_t(k) + 1] = 1e30;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[size_t(k) + 1] < q) ++k;
    const double dq = q - v[size_t(k)];
    d[size_t(q)] = dq * dq + f[size_t(v[size_t(k)])];
  }
}

}  // namespace

std::vector<double> distance_to_invalid(const KnownMask& valid) {
  const int w = valid.width, h = valid.height;
  const double big = 1e18;
  std::vector<double> sq(size_t(w) * h);
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = valid.flags[i] ? big : 0.0;

  const size_t nmax = size_t(std::max(w, h));
  std::vector<double> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[size_t(y)] = sq[size_t(y) * w + x];
    dt_1d(f, d, h, v, z);
    for (int y = 0; y < h; ++y) sq[size_t(y) * w + x] = d[size_t(y)];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[size_t(x)] = sq[size_t(y) * w + x];
    dt_1d(f, d, w, v, z);
    for (int x = 0; x < w; ++x) sq[size_t(y) * w + x] = d[size_t(x)];
  }

  std::vector<double> out(size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double dist = std::sqrt(sq[size_t(y) * w + x]);
      const double border = std::min(std::min(x + 1, y + 1), std::min(w - x, h - y));
      out[size_t(y) * w + x] = std::min(dist, border);
    }
  return out;
}

}  // namespace npp
