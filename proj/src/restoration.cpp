#include "pnp/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace pnp::restoration {

namespace {

void check_odd(int size, const char* what) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument(std::string(what) + ": size must be odd and positive");
}

Psf normalized(Psf psf) {
  const double total = psf.kernel.pixels.sum();
  if (!(total > 0.0)) throw std::invalid_argument("Psf: kernel must have positive mass");
  psf.kernel.pixels /= total;
  return psf;
}

void check_image(const Image& gt, const char* what) {
  if (gt.size() == 0) throw std::invalid_argument(std::string(what) + ": empty image");
  require_size(gt.pixels.size(), gt.size(), what);
  if (!gt.pixels.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite pixels");
}

Vector add_noise(Vector clean, double sigma_w, std::mt19937_64& rng) {
  if (sigma_w > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma_w);
    for (Index i = 0; i < clean.size(); ++i) clean[i] += noise(rng);
  }
  return clean;
}

double median_of(std::vector<double>& values) {
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

// Median over observed pixels of the window around (r, c); nullopt if none.
std::optional<double> window_median(const Image& image, const std::vector<bool>& observed, Index r, Index c,
                                    int radius, std::vector<double>& scratch) {
  scratch.clear();
  for (Index i = std::max<Index>(0, r - radius); i <= std::min(image.height - 1, r + radius); ++i) {
    for (Index j = std::max<Index>(0, c - radius); j <= std::min(image.width - 1, c + radius); ++j) {
      const Index idx = i * image.width + j;
      if (observed[static_cast<std::size_t>(idx)]) scratch.push_back(image.pixels[idx]);
    }
  }
  if (scratch.empty()) return std::nullopt;
  return median_of(scratch);
}

Image masked_median(const Image& image, const std::vector<bool>& observed, int window) {
  check_odd(window, "median filter");
  if (std::none_of(observed.begin(), observed.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("median filter: no observed pixels");
  }
  Image out(image.height, image.width);
  std::vector<double> scratch;
  for (Index r = 0; r < image.height; ++r) {
    for (Index c = 0; c < image.width; ++c) {
      for (int radius = window / 2;; ++radius) {
        if (auto m = window_median(image, observed, r, c, radius, scratch)) {
          out.at(r, c) = *m;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace

Psf Psf::box(int size) {
  check_odd(size, "Psf::box");
  Psf psf;
  psf.kind = Kind::Box;
  psf.size = size;
  psf.kernel = Image(size, size, Vector::Ones(size * size));
  return normalized(std::move(psf));
}

Psf Psf::gaussian(double variance, int size) {
  if (!(variance > 0.0)) throw std::invalid_argument("Psf::gaussian: variance must be positive");
  if (size == 0) size = 2 * static_cast<int>(std::ceil(3.0 * std::sqrt(variance))) + 1;
  check_odd(size, "Psf::gaussian");
  Psf psf;
  psf.kind = Kind::Gaussian;
  psf.size = size;
  psf.variance = variance;
  psf.kernel = Image(size, size);
  const int c = size / 2;
  for (int r = 0; r < size; ++r) {
    for (int s = 0; s < size; ++s) {
      const double d2 = static_cast<double>((r - c) * (r - c) + (s - c) * (s - c));
      psf.kernel.at(r, s) = std::exp(-d2 / (2.0 * variance));
    }
  }
  return normalized(std::move(psf));
}

Psf Psf::motion(int size) {
  check_odd(size, "Psf::motion");
  Psf psf;
  psf.kind = Kind::Motion;
  psf.size = size;
  psf.kernel = Image(size, size);
  for (int s = 0; s < size; ++s) psf.kernel.at(size / 2, s) = 1.0;
  return normalized(std::move(psf));
}

Psf Psf::delta() {
  Psf psf;
  psf.kind = Kind::Delta;
  psf.size = 1;
  psf.kernel = Image(1, 1, Vector::Ones(1));
  return psf;
}

Psf Psf::custom(Image kernel) {
  if (kernel.height % 2 == 0 || kernel.width % 2 == 0 || kernel.size() == 0) {
    throw std::invalid_argument("Psf::custom: side lengths must be odd");
  }
  if (!kernel.pixels.allFinite() || kernel.pixels.minCoeff() < 0.0) {
    throw std::invalid_argument("Psf::custom: entries must be finite and nonnegative");
  }
  Psf psf;
  psf.kind = Kind::Custom;
  psf.size = static_cast<int>(std::max(kernel.height, kernel.width));
  psf.kernel = std::move(kernel);
  return normalized(std::move(psf));
}

std::string_view to_string(Psf::Kind kind) {
  switch (kind) {
    case Psf::Kind::Box:
      return "box";
    case Psf::Kind::Gaussian:
      return "gaussian";
    case Psf::Kind::Motion:
      return "motion";
    case Psf::Kind::Delta:
      return "delta";
    case Psf::Kind::Custom:
      return "custom";
  }
  return "unknown";
}

RestorationProblem make_inpainting(const Image& gt, double keep_fraction, double sigma_w, std::uint64_t seed) {
  check_image(gt, "make_inpainting");
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) {
    throw std::invalid_argument("make_inpainting: keep_fraction must lie in (0, 1)");
  }
  if (!(sigma_w >= 0.0)) throw std::invalid_argument("make_inpainting: sigma_w must be >= 0");
  const Index n = gt.size();
  if (n < 2) throw std::invalid_argument("make_inpainting: image needs at least two pixels");
  const Index m = std::clamp<Index>(std::llround(keep_fraction * static_cast<double>(n)), 1, n - 1);

  std::mt19937_64 rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(m));
  std::sort(order.begin(), order.end());

  RestorationProblem p;
  p.task = Task::Inpainting;
  p.op = std::make_shared<linops::MaskOperator>(n, std::move(order));
  p.b = add_noise(p.op->apply(gt.pixels), sigma_w, rng);
  p.sigma_w = sigma_w;
  p.ground_truth = gt;
  p.height = gt.height;
  p.width = gt.width;
  return p;
}

RestorationProblem make_deblurring(const Image& gt, const Psf& psf, double sigma_w, std::uint64_t seed) {
  check_image(gt, "make_deblurring");
  if (!(sigma_w >= 0.0)) throw std::invalid_argument("make_deblurring: sigma_w must be >= 0");
  if (psf.kernel.height > gt.height || psf.kernel.width > gt.width) {
    throw std::invalid_argument("make_deblurring: PSF larger than the image");
  }
  std::mt19937_64 rng(seed);
  RestorationProblem p;
  p.task = Task::Deblurring;
  p.op = std::make_shared<linops::CirculantOperator>(psf.kernel, gt.height, gt.width);
  p.b = add_noise(p.op->apply(gt.pixels), sigma_w, rng);
  p.sigma_w = sigma_w;
  p.ground_truth = gt;
  p.height = gt.height;
  p.width = gt.width;
  return p;
}

Image median_filter(const Image& image, int window) {
  return masked_median(image, std::vector<bool>(static_cast<std::size_t>(image.size()), true), window);
}

Image median_init(const RestorationProblem& problem, int window) {
  const auto* mask = dynamic_cast<const linops::MaskOperator*>(problem.op.get());
  if (problem.task != Task::Inpainting || mask == nullptr) {
    throw std::invalid_argument("median_init: needs an inpainting problem");
  }
  std::vector<bool> observed(static_cast<std::size_t>(problem.height * problem.width), false);
  for (Index i : mask->kept_indices()) observed[static_cast<std::size_t>(i)] = true;
  return masked_median(degraded_image(problem), observed, window);
}

Image degraded_image(const RestorationProblem& problem) {
  if (problem.task == Task::Inpainting) {
    return Image(problem.height, problem.width, problem.op->apply_adjoint(problem.b));
  }
  return Image(problem.height, problem.width, problem.b);
}

Image initial_estimate(const RestorationProblem& problem, int median_window) {
  if (problem.task == Task::Inpainting) return median_init(problem, median_window);
  return clamp01(degraded_image(problem));
}

double psnr(const Vector& x, const Vector& reference) {
  require_size(x.size(), reference.size(), "psnr");
  if (x.size() == 0) throw std::invalid_argument("psnr: empty images");
  const double mse = (x - reference).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrIdentical;
  return std::min(kPsnrIdentical, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Image& x, const Image& reference) {
  if (x.height != reference.height || x.width != reference.width) {
    throw DimensionError("psnr: image shapes differ");
  }
  return psnr(x.pixels, reference.pixels);
}

Image clamp01(const Image& image) {
  return Image(image.height, image.width, image.pixels.cwiseMax(0.0).cwiseMin(1.0));
}

Image synthetic_scene(Index height, Index width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("synthetic_scene: empty size");
  Image img(height, width);
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const double y = (static_cast<double>(r) + 0.5) / h;
      const double x = (static_cast<double>(c) + 0.5) / w;
      double v = 0.25 + 0.3 * x * (1.0 - 0.5 * y);
      if (std::hypot(x - 0.32, y - 0.35) < 0.2) v = 0.8;
      if (x > 0.55 && x < 0.9 && y > 0.55 && y < 0.85) v = 0.15 + 0.05 * std::sin(12.0 * x);
      if (y > 0.12 && y < 0.42 && x > 0.58) v = (static_cast<int>(x * 6.0) % 2 == 0) ? 0.7 : 0.35;
      img.at(r, c) = std::clamp(v, 0.1, 0.9);
    }
  }
  return img;
}

}  // namespace pnp::restoration
