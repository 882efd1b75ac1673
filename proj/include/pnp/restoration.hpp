#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "pnp/common.hpp"
#include "pnp/linops.hpp"

namespace pnp::restoration {

enum class Task { Inpainting, Deblurring };

/// b = A xi + w with w ~ N(0, sigma_w^2 I).
struct RestorationProblem {
  Task task = Task::Inpainting;
  linops::OperatorPtr op;
  Vector b;
  double sigma_w = 0.0;
  std::optional<Image> ground_truth;
  Index height = 0;
  Index width = 0;
};

/// Point spread function, nonnegative and summing to one.
struct Psf {
  enum class Kind { Box, Gaussian, Motion, Delta, Custom };
  Kind kind = Kind::Delta;
  int size = 1;
  double variance = 0.0;  // Gaussian only
  Image kernel;

  static Psf box(int size = 9);
  /// size 0 picks 2 * ceil(3 sigma) + 1.
  static Psf gaussian(double variance = 4.0, int size = 0);
  /// Horizontal line through the centre of a size x size support.
  static Psf motion(int size = 11);
  static Psf delta();
  /// Normalizes a nonnegative kernel with odd side lengths.
  static Psf custom(Image kernel);
};

std::string_view to_string(Psf::Kind kind);

/// Uniformly random mask keeping round(keep_fraction * n) pixels (clamped to [1, n-1]).
RestorationProblem make_inpainting(const Image& gt, double keep_fraction, double sigma_w,
                                   std::uint64_t seed);

/// Periodic blur with the PSF plus seeded noise.
RestorationProblem make_deblurring(const Image& gt, const Psf& psf, double sigma_w, std::uint64_t seed);

/// Median over the window, using only pixels inside the image.
Image median_filter(const Image& image, int window);

/// Median of the observed pixels around each location. The window grows by 2
/// until it covers at least one observation.
Image median_init(const RestorationProblem& problem, int window = 3);

/// A^T b with unobserved pixels at 0 (inpainting) or b (deblurring).
Image degraded_image(const RestorationProblem& problem);

/// Starting point for the solvers: median_init for inpainting, b clamped to [0,1] for deblurring.
Image initial_estimate(const RestorationProblem& problem, int median_window = 3);

inline constexpr double kPsnrIdentical = 999.0;

/// 10 log10(1 / MSE); kPsnrIdentical when the images agree exactly.
double psnr(const Vector& x, const Vector& reference);
double psnr(const Image& x, const Image& reference);

Image clamp01(const Image& image);

/// Deterministic piecewise smooth test scene in [0.1, 0.9] with edges and texture.
Image synthetic_scene(Index height, Index width);

}  // namespace pnp::restoration
