#include "pnp/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <vector>

namespace pnp::io {

namespace {

std::string describe(const std::filesystem::path& path) { return "'" + path.string() + "'"; }

// Next header integer, skipping whitespace and '#' comments.
long read_header_int(std::istream& in, const std::filesystem::path& path) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  long value = 0;
  if (!(in >> value) || value <= 0) throw ImageIoError("read_pgm: malformed header in " + describe(path));
  return value;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + describe(path));
  std::array<char, 2> magic{};
  in.read(magic.data(), 2);
  if (!in || magic[0] != 'P' || (magic[1] != '2' && magic[1] != '5')) {
    throw ImageIoError("read_pgm: " + describe(path) + " is not a P2/P5 PGM file");
  }
  const long width = read_header_int(in, path);
  const long height = read_header_int(in, path);
  const long maxval = read_header_int(in, path);
  if (maxval > 65535) throw ImageIoError("read_pgm: maxval out of range in " + describe(path));

  Image img(height, width);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic[1] == '2') {
    for (Index i = 0; i < img.size(); ++i) {
      long v = -1;
      if (!(in >> v) || v < 0 || v > maxval) throw ImageIoError("read_pgm: bad pixel data in " + describe(path));
      img.pixels[i] = static_cast<double>(v) * scale;
    }
    return img;
  }
  in.get();  // single whitespace after maxval
  const std::size_t bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.size()) * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw ImageIoError("read_pgm: truncated pixel data in " + describe(path));
  }
  for (Index i = 0; i < img.size(); ++i) {
    const std::size_t k = static_cast<std::size_t>(i) * bytes;
    const unsigned v = bytes == 1 ? raw[k] : (static_cast<unsigned>(raw[k]) << 8) | raw[k + 1];
    img.pixels[i] = static_cast<double>(v) * scale;
  }
  return img;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  require_size(image.pixels.size(), image.size(), "write_pgm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write " + describe(path));
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.size()));
  for (Index i = 0; i < image.size(); ++i) {
    const double v = std::isfinite(image.pixels[i]) ? std::clamp(image.pixels[i], 0.0, 1.0) : 0.0;
    raw[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw ImageIoError("write_pgm: failed writing " + describe(path));
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw ImageIoError("read_png: " + describe(path) + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw ImageIoError("read_png: " + describe(path) + ": " + message);
  }
  Image img(static_cast<Index>(png.height), static_cast<Index>(png.width));
  for (Index i = 0; i < img.size(); ++i) img.pixels[i] = buffer[static_cast<std::size_t>(i)] / 255.0;
  return img;
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + describe(path));
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  if (in.gcount() >= 2 && sig[0] == 'P' && (sig[1] == '2' || sig[1] == '5')) return read_pgm(path);
  if (in.gcount() == 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return read_png(path);
  throw ImageIoError("read_image: unsupported format for " + describe(path));
}

}  // namespace pnp::io
