#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lmke {

// Post-activation convolutional output, c x h x w row-major, all entries
// non-negative. Only the pooling math consumes this; no backbone lives here.
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;  // data[(c * height + y) * width + x]

  FeatureMap(std::size_t c, std::size_t h, std::size_t w);
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, std::vector<float> values);

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  std::size_t plane() const { return height * width; }
};

struct GemParams {
  double p = 3.0;        // fixed exponent, never trained
  double eps = 1e-6;     // clamp floor, keeps 0^(1/p) gradients finite
};

struct ArcMarginParams {
  double scale = 30.0;
  double margin = 0.3;   // additive angular margin, radians
  std::size_t num_classes = 0;
  std::size_t dim = 0;
};

// Generalized mean pooling: per channel ((1/(h*w)) * sum max(x, eps)^p)^(1/p).
// p = 1 is average pooling, p -> inf approaches max pooling.
std::vector<double> gem_pool(const FeatureMap& map, const GemParams& params);

// Analytic gradient of gem_pool composed with an upstream per-channel
// gradient. Entries at or below eps sit on the clamp and get zero gradient.
std::vector<double> gem_pool_grad(const FeatureMap& map, const GemParams& params,
                                  std::span<const double> upstream);

using Matrix = std::vector<std::vector<double>>;

// ArcFace-style logits: s*cos(theta_j) for j != target and
// s*cos(theta_target + m) for the target, with the standard fallback
// s*(cos theta - m*sin m) once cos theta <= cos(pi - m). Embedding and every
// weight row must be unit-norm within 1e-5.
std::vector<double> arcmargin_logits(std::span<const double> embedding,
                                     const Matrix& weights, std::size_t target,
                                     const ArcMarginParams& params);

// Mean cross-entropy over the batch on arcmargin_logits outputs.
double arcmargin_loss(const Matrix& embeddings, const Matrix& weights,
                      const std::vector<std::size_t>& targets,
                      const ArcMarginParams& params);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace lmke
