#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pnp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

/// Raised when operand sizes disagree with an operator's domain or range.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative inner solve (CG, balancing, power iteration) missed its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A solver produced a non-finite iterate.
class SolverAbort : public std::runtime_error {
 public:
  SolverAbort(const std::string& what, int iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

inline void require_size(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": expected size " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

/// Grayscale image, row-major, intensities nominally in [0,1].
struct Image {
  Index height = 0;
  Index width = 0;
  Vector pixels;

  Image() = default;
  Image(Index h, Index w) : height(h), width(w), pixels(Vector::Zero(h * w)) {}
  Image(Index h, Index w, Vector data) : height(h), width(w), pixels(std::move(data)) {
    require_size(pixels.size(), h * w, "Image");
  }

  Index size() const { return height * width; }
  double& at(Index r, Index c) { return pixels[r * width + c]; }
  double at(Index r, Index c) const { return pixels[r * width + c]; }
};

}  // namespace pnp
