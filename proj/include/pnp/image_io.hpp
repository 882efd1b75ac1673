#pragma once

#include <filesystem>
#include <stdexcept>

#include "pnp/common.hpp"

namespace pnp::io {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary (P5) or ASCII (P2) PGM, 8 or 16 bit; intensities scaled to [0,1].
Image read_pgm(const std::filesystem::path& path);

/// 8-bit binary PGM; values are clamped to [0,1] and rounded.
void write_pgm(const Image& image, const std::filesystem::path& path);

/// Any PNG, converted to 8-bit grayscale.
Image read_png(const std::filesystem::path& path);

/// Dispatches on the file signature.
Image read_image(const std::filesystem::path& path);

}  // namespace pnp::io
